#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sketchgen/nn.hpp"

namespace sketchgen {

// Architecture and latent-space hyperparameters shared by all five networks.
struct ModelConfig {
    int64_t resolution = 128;
    int64_t style_dim = 32; // length of z_s / F_s
    int64_t noise_dim = 32; // length of z_n appended to the style vector
    int64_t base_channels = 0; // 0 = pick by resolution (64 at 128px, else 32)
    int64_t cbn_sites = 4;     // style chunks: bottleneck + one per decoder stage
    int64_t class_count = 0;
    int64_t painter_count = 0;
    bool saturating_adv = false; // literal minimax generator term instead of non-saturating

    int64_t channels() const {
        return base_channels > 0 ? base_channels : (resolution >= 128 ? 64 : 32);
    }
    int64_t cond_dim() const { return style_dim + noise_dim; }
    int64_t chunk_dim() const { return cond_dim() / cbn_sites; }

    void validate() const {
        if (resolution % 8 != 0 || resolution < 8)
            throw std::invalid_argument("resolution must be a positive multiple of 8");
        if (cbn_sites != 4)
            throw std::invalid_argument("generator has 4 style injection sites");
        if (cond_dim() % cbn_sites != 0)
            throw std::invalid_argument("style_dim + noise_dim must divide into cbn_sites chunks");
        if (style_dim <= 0 || noise_dim < 0) throw std::invalid_argument("bad latent sizes");
        if (class_count <= 0 || painter_count <= 0)
            throw std::invalid_argument("class_count and painter_count must be positive");
    }

    bool same_architecture(const ModelConfig& o) const {
        return resolution == o.resolution && style_dim == o.style_dim &&
               noise_dim == o.noise_dim && channels() == o.channels() &&
               cbn_sites == o.cbn_sites && class_count == o.class_count &&
               painter_count == o.painter_count;
    }
};

namespace nets {

using ad::NodePtr;
using ad::Tape;

constexpr double kLeakySlope = 0.2;
constexpr double kLogVarClamp = 10.0;

// Appends fresh standard-normal noise to a style vector batch [N, style_dim],
// returning [N, style_dim + noise_dim]. The style prefix is copied bit-exactly.
template <typename T>
Tensor<T> make_style_condition(const Tensor<T>& style, int64_t noise_dim, Rng& rng) {
    const int64_t n = style.dim(0), ds = style.dim(1);
    Tensor<T> cond({n, ds + noise_dim});
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(style.data() + i * ds, ds, cond.data() + i * (ds + noise_dim));
        for (int64_t j = 0; j < noise_dim; ++j)
            cond.data()[i * (ds + noise_dim) + ds + j] = static_cast<T>(rng.normal());
    }
    return cond;
}

// Splits a condition batch into its per-site chunks, in injection order
// (deepest site first). Concatenating the chunks back reconstructs the input.
template <typename T>
std::vector<NodePtr<T>> split_chunks(Tape<T>& t, NodePtr<T> cond, int64_t sites) {
    const int64_t d = cond->value.dim(1);
    if (d % sites != 0) throw std::invalid_argument("condition length not divisible into chunks");
    const int64_t chunk = d / sites;
    std::vector<NodePtr<T>> out;
    for (int64_t i = 0; i < sites; ++i) out.push_back(ad::slice_cols(t, cond, i * chunk, chunk));
    return out;
}

template <typename T>
struct FeaturePyramid {
    NodePtr<T> stem;       // full-resolution skip
    NodePtr<T> levels[3];  // res/2, res/4, res/8
    NodePtr<T> bottleneck; // res/8, deepest style-free features
};

template <typename T>
struct GeneratorResult {
    NodePtr<T> image;           // [N,1,res,res] in [-1,1]
    NodePtr<T> shared_features; // final shared block output, input of the output conv
};

// U-Net generator. The icon passes through three stride-2 encoder stages; the
// decoder mirrors them with nearest-neighbour upsampling, concatenating the
// matching encoder features at every stage. Style enters through conditional
// batch norm at four sites: the bottleneck and each decoder stage.
template <typename T>
class Generator : public nn::Module<T> {
public:
    Generator(const ModelConfig& cfg, Rng& rng)
        : cfg_(cfg),
          b_(cfg.channels()),
          stem_(rng, 1, b_, 3, 1, 1),
          down1_(rng, b_, b_, 3, 2, 1),
          down1b_(rng, b_, b_, 3, 1, 1),
          bn1a_(b_),
          bn1b_(b_),
          down2_(rng, b_, 2 * b_, 3, 2, 1),
          down2b_(rng, 2 * b_, 2 * b_, 3, 1, 1),
          bn2a_(2 * b_),
          bn2b_(2 * b_),
          down3_(rng, 2 * b_, 4 * b_, 3, 2, 1),
          down3b_(rng, 4 * b_, 4 * b_, 3, 1, 1),
          bn3a_(4 * b_),
          bn3b_(4 * b_),
          enc_bot_(rng, 4 * b_, 4 * b_, 3, 1, 1),
          bn_bot_(4 * b_),
          bot1_(rng, 4 * b_, 4 * b_, 3, 1, 1),
          bot2_(rng, 4 * b_, 4 * b_, 3, 1, 1),
          cbn_bot1_(rng, 4 * b_, cfg.chunk_dim()),
          cbn_bot2_(rng, 4 * b_, cfg.chunk_dim()),
          up1_(rng, 6 * b_, 2 * b_, 3, 1, 1),
          up1b_(rng, 2 * b_, 2 * b_, 3, 1, 1),
          cbn1a_(rng, 2 * b_, cfg.chunk_dim()),
          cbn1b_(rng, 2 * b_, cfg.chunk_dim()),
          up2_(rng, 3 * b_, b_, 3, 1, 1),
          up2b_(rng, b_, b_, 3, 1, 1),
          cbn2a_(rng, b_, cfg.chunk_dim()),
          cbn2b_(rng, b_, cfg.chunk_dim()),
          up3_(rng, 2 * b_, b_, 3, 1, 1),
          up3b_(rng, b_, b_, 3, 1, 1),
          cbn3a_(rng, b_, cfg.chunk_dim()),
          cbn3b_(rng, b_, cfg.chunk_dim()),
          out_(rng, b_, 1, 3, 1, 1) {
        this->register_child("stem", &stem_);
        this->register_child("down1", &down1_);
        this->register_child("down1b", &down1b_);
        this->register_child("bn1a", &bn1a_);
        this->register_child("bn1b", &bn1b_);
        this->register_child("down2", &down2_);
        this->register_child("down2b", &down2b_);
        this->register_child("bn2a", &bn2a_);
        this->register_child("bn2b", &bn2b_);
        this->register_child("down3", &down3_);
        this->register_child("down3b", &down3b_);
        this->register_child("bn3a", &bn3a_);
        this->register_child("bn3b", &bn3b_);
        this->register_child("enc_bot", &enc_bot_);
        this->register_child("bn_bot", &bn_bot_);
        this->register_child("bot1", &bot1_);
        this->register_child("bot2", &bot2_);
        this->register_child("cbn_bot1", &cbn_bot1_);
        this->register_child("cbn_bot2", &cbn_bot2_);
        this->register_child("up1", &up1_);
        this->register_child("up1b", &up1b_);
        this->register_child("cbn1a", &cbn1a_);
        this->register_child("cbn1b", &cbn1b_);
        this->register_child("up2", &up2_);
        this->register_child("up2b", &up2b_);
        this->register_child("cbn2a", &cbn2a_);
        this->register_child("cbn2b", &cbn2b_);
        this->register_child("up3", &up3_);
        this->register_child("up3b", &up3b_);
        this->register_child("cbn3a", &cbn3a_);
        this->register_child("cbn3b", &cbn3b_);
        this->register_child("out", &out_);
    }

    FeaturePyramid<T> encode_content(Tape<T>& t, NodePtr<T> icon) {
        check_image(icon);
        const T slope = static_cast<T>(kLeakySlope);
        FeaturePyramid<T> p;
        p.stem = ad::leaky_relu(t, stem_.forward(t, icon), slope);
        NodePtr<T> x = ad::leaky_relu(t, bn1a_.forward(t, down1_.forward(t, p.stem)), slope);
        p.levels[0] = ad::leaky_relu(t, bn1b_.forward(t, down1b_.forward(t, x)), slope);
        x = ad::leaky_relu(t, bn2a_.forward(t, down2_.forward(t, p.levels[0])), slope);
        p.levels[1] = ad::leaky_relu(t, bn2b_.forward(t, down2b_.forward(t, x)), slope);
        x = ad::leaky_relu(t, bn3a_.forward(t, down3_.forward(t, p.levels[1])), slope);
        p.levels[2] = ad::leaky_relu(t, bn3b_.forward(t, down3b_.forward(t, x)), slope);
        p.bottleneck =
            ad::leaky_relu(t, bn_bot_.forward(t, enc_bot_.forward(t, p.levels[2])), slope);
        return p;
    }

    GeneratorResult<T> decode(Tape<T>& t, const FeaturePyramid<T>& p, NodePtr<T> condition) {
        if (condition->value.dim(1) != cfg_.cond_dim())
            throw std::invalid_argument("condition length mismatch");
        const T slope = static_cast<T>(kLeakySlope);
        auto chunks = split_chunks(t, condition, cfg_.cbn_sites);

        NodePtr<T> x = ad::leaky_relu(t, cbn_bot1_.forward(t, bot1_.forward(t, p.bottleneck), chunks[0]), slope);
        x = ad::leaky_relu(t, cbn_bot2_.forward(t, bot2_.forward(t, x), chunks[0]), slope);

        x = ad::concat_channels(t, ad::upsample_nearest2x(t, x), p.levels[1]);
        x = ad::leaky_relu(t, cbn1a_.forward(t, up1_.forward(t, x), chunks[1]), slope);
        x = ad::leaky_relu(t, cbn1b_.forward(t, up1b_.forward(t, x), chunks[1]), slope);

        x = ad::concat_channels(t, ad::upsample_nearest2x(t, x), p.levels[0]);
        x = ad::leaky_relu(t, cbn2a_.forward(t, up2_.forward(t, x), chunks[2]), slope);
        x = ad::leaky_relu(t, cbn2b_.forward(t, up2b_.forward(t, x), chunks[2]), slope);

        x = ad::concat_channels(t, ad::upsample_nearest2x(t, x), p.stem);
        x = ad::leaky_relu(t, cbn3a_.forward(t, up3_.forward(t, x), chunks[3]), slope);
        x = ad::leaky_relu(t, cbn3b_.forward(t, up3b_.forward(t, x), chunks[3]), slope);

        GeneratorResult<T> r;
        r.shared_features = x;
        r.image = ad::tanh_op(t, out_.forward(t, x));
        return r;
    }

    GeneratorResult<T> forward(Tape<T>& t, NodePtr<T> icon, NodePtr<T> condition) {
        return decode(t, encode_content(t, icon), condition);
    }

    nn::Parameter<T>* output_weight() { return out_.weight(); }
    nn::CondBatchNorm2d<T>& bottleneck_cbn() { return cbn_bot1_; }
    const ModelConfig& config() const { return cfg_; }

private:
    void check_image(NodePtr<T> x) const {
        const auto& d = x->value.dims();
        if (d.size() != 4 || d[1] != 1 || d[2] != cfg_.resolution || d[3] != cfg_.resolution)
            throw std::invalid_argument("expected [N,1," + std::to_string(cfg_.resolution) + "," +
                                        std::to_string(cfg_.resolution) + "], got " +
                                        x->value.shape_str());
    }

    ModelConfig cfg_;
    int64_t b_;
    nn::Conv2d<T> stem_;
    nn::Conv2d<T> down1_, down1b_;
    nn::BatchNorm2d<T> bn1a_, bn1b_;
    nn::Conv2d<T> down2_, down2b_;
    nn::BatchNorm2d<T> bn2a_, bn2b_;
    nn::Conv2d<T> down3_, down3b_;
    nn::BatchNorm2d<T> bn3a_, bn3b_;
    nn::Conv2d<T> enc_bot_;
    nn::BatchNorm2d<T> bn_bot_;
    nn::Conv2d<T> bot1_, bot2_;
    nn::CondBatchNorm2d<T> cbn_bot1_, cbn_bot2_;
    nn::Conv2d<T> up1_, up1b_;
    nn::CondBatchNorm2d<T> cbn1a_, cbn1b_;
    nn::Conv2d<T> up2_, up2b_;
    nn::CondBatchNorm2d<T> cbn2a_, cbn2b_;
    nn::Conv2d<T> up3_, up3b_;
    nn::CondBatchNorm2d<T> cbn3a_, cbn3b_;
    nn::Conv2d<T> out_;
};

// Four stride-2 stages to pooled features; shared topology of the style
// encoder, the discriminator, the recognizer and the painter identifier.
template <typename T>
class ConvBackbone : public nn::Module<T> {
public:
    ConvBackbone(Rng& rng, int64_t base)
        : b_(base),
          c1_(rng, 1, b_, 3, 2, 1),
          c2_(rng, b_, 2 * b_, 3, 2, 1),
          c3_(rng, 2 * b_, 4 * b_, 3, 2, 1),
          c4_(rng, 4 * b_, 4 * b_, 3, 2, 1),
          n2_(2 * b_),
          n3_(4 * b_),
          n4_(4 * b_) {
        this->register_child("c1", &c1_);
        this->register_child("c2", &c2_);
        this->register_child("c3", &c3_);
        this->register_child("c4", &c4_);
        this->register_child("n2", &n2_);
        this->register_child("n3", &n3_);
        this->register_child("n4", &n4_);
    }

    // [N,1,H,W] -> [N, 4*base]
    NodePtr<T> forward(Tape<T>& t, NodePtr<T> x) {
        const T slope = static_cast<T>(kLeakySlope);
        NodePtr<T> h = ad::leaky_relu(t, c1_.forward(t, x), slope);
        h = ad::leaky_relu(t, n2_.forward(t, c2_.forward(t, h)), slope);
        h = ad::leaky_relu(t, n3_.forward(t, c3_.forward(t, h)), slope);
        h = ad::leaky_relu(t, n4_.forward(t, c4_.forward(t, h)), slope);
        return ad::global_avg_pool(t, h);
    }
    int64_t feature_dim() const { return 4 * b_; }

private:
    int64_t b_;
    nn::Conv2d<T> c1_, c2_, c3_, c4_;
    nn::BatchNorm2d<T> n2_, n3_, n4_;
};

template <typename T>
struct StylePosterior {
    NodePtr<T> mean;
    NodePtr<T> log_variance;
};

template <typename T>
class StyleEncoder : public nn::Module<T> {
public:
    StyleEncoder(const ModelConfig& cfg, Rng& rng)
        : backbone_(rng, cfg.channels()),
          mean_head_(rng, backbone_.feature_dim(), cfg.style_dim),
          logvar_head_(rng, backbone_.feature_dim(), cfg.style_dim) {
        this->register_child("backbone", &backbone_);
        this->register_child("mean", &mean_head_);
        this->register_child("logvar", &logvar_head_);
    }
    StylePosterior<T> forward(Tape<T>& t, NodePtr<T> sketch) {
        NodePtr<T> f = backbone_.forward(t, sketch);
        StylePosterior<T> p;
        p.mean = mean_head_.forward(t, f);
        p.log_variance = ad::clamp(t, logvar_head_.forward(t, f), static_cast<T>(-kLogVarClamp),
                                   static_cast<T>(kLogVarClamp));
        return p;
    }

private:
    ConvBackbone<T> backbone_;
    nn::Linear<T> mean_head_, logvar_head_;
};

template <typename T>
class Discriminator : public nn::Module<T> {
public:
    Discriminator(const ModelConfig& cfg, Rng& rng)
        : backbone_(rng, cfg.channels()), head_(rng, backbone_.feature_dim(), 1) {
        this->register_child("backbone", &backbone_);
        this->register_child("head", &head_);
    }
    // Raw score before the sigmoid; the losses consume this for stability.
    NodePtr<T> forward_logit(Tape<T>& t, NodePtr<T> x) {
        return head_.forward(t, backbone_.forward(t, x));
    }
    // Probability that the image is real, in (0,1).
    NodePtr<T> forward(Tape<T>& t, NodePtr<T> x) {
        return ad::sigmoid(t, forward_logit(t, x));
    }

private:
    ConvBackbone<T> backbone_;
    nn::Linear<T> head_;
};

template <typename T>
class Classifier : public nn::Module<T> {
public:
    Classifier(int64_t base, int64_t n_classes, Rng& rng)
        : backbone_(rng, base), head_(rng, backbone_.feature_dim(), n_classes) {
        this->register_child("backbone", &backbone_);
        this->register_child("head", &head_);
    }
    NodePtr<T> forward(Tape<T>& t, NodePtr<T> x) {
        return head_.forward(t, backbone_.forward(t, x));
    }
    // Pooled penultimate features, used as the embedding for the proxy metrics.
    NodePtr<T> features(Tape<T>& t, NodePtr<T> x) { return backbone_.forward(t, x); }
    int64_t feature_dim() const { return backbone_.feature_dim(); }

private:
    ConvBackbone<T> backbone_;
    nn::Linear<T> head_;
};

template <typename T>
class Recognizer : public Classifier<T> {
public:
    Recognizer(const ModelConfig& cfg, Rng& rng)
        : Classifier<T>(cfg.channels(), cfg.class_count, rng) {}
};

template <typename T>
class PainterIdentifier : public Classifier<T> {
public:
    PainterIdentifier(const ModelConfig& cfg, Rng& rng)
        : Classifier<T>(cfg.channels(), cfg.painter_count, rng) {}
};

} // namespace nets

} // namespace sketchgen
