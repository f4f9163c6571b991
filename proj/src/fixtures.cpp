#include "tasklens/fixtures.hpp"

#include <fmt/format.h>

#include "tasklens/error.hpp"

namespace tasklens::fixtures {

Rng::Rng(std::uint64_t seed) {
    // splitmix64 so nearby seeds give unrelated streams
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    state_ = (z ^ (z >> 31)) | 1u;
}

std::uint64_t Rng::next() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1Dull;
}

int Rng::uniform(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next() % span);
}

double Rng::unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

namespace {

constexpr const char* kFixtureTimestamp = "2024-01-01T00:00:00Z";

// Accumulates a source file and remembers the line of each emitted statement.
class SourceWriter {
public:
    int line(const std::string& text) {
        lines_.push_back(text);
        return static_cast<int>(lines_.size());
    }
    [[nodiscard]] std::string text() const {
        std::string out;
        for (const auto& l : lines_) out += l + "\n";
        return out;
    }
    [[nodiscard]] const std::string& at(int line) const { return lines_[static_cast<std::size_t>(line - 1)]; }

private:
    std::vector<std::string> lines_;
};

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(' ');
    return b == std::string::npos ? std::string{} : s.substr(b);
}

struct Frame {
    const SourceWriter* file;
    std::string path;
    int line;
};

class UnetBuilder {
public:
    explicit UnetBuilder(bool plus) : plus_(plus) {}

    ModelPackage build(FixtureInfo* info);

private:
    std::string tensor(std::vector<std::int64_t> shape) {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        auto id = fmt::format("t{:03d}", tensor_seq_++);
        g_.tensors.push_back(Tensor{id, n, std::move(shape), NumericFormat::fp16});
        return id;
    }
    const std::vector<std::int64_t>& shape_of(const std::string& id) const {
        for (const auto& t : g_.tensors) {
            if (t.id == id) return *t.shape;
        }
        throw Error(ErrorCode::Usage, "fixture: unknown tensor " + id);
    }
    std::string task(const std::string& name, TaskKind kind, std::vector<std::string> inputs,
                     std::vector<std::int64_t> out_shape, std::int64_t weights, const std::string& group,
                     std::vector<Frame> frames) {
        auto out = tensor(std::move(out_shape));
        HardwareTask t;
        t.id = static_cast<TaskId>(g_.tasks.size());
        t.name = name;
        t.kind = kind;
        t.inputs = std::move(inputs);
        t.outputs = {out};
        t.weight_count = weights;
        t.group = group;
        std::vector<std::size_t> idx;
        for (const auto& f : frames) idx.push_back(location(f));
        t.code_ref = static_cast<int>(idx.front());
        cm_.task_map[t.id] = std::move(idx);
        g_.tasks.push_back(std::move(t));
        ++stages_;
        return out;
    }
    std::size_t location(const Frame& f) {
        for (std::size_t i = 0; i < cm_.locations.size(); ++i) {
            if (cm_.locations[i].file == f.path && cm_.locations[i].line == f.line) return i;
        }
        cm_.locations.push_back(CodeLocation{f.path, f.line, trim(f.file->at(f.line))});
        return cm_.locations.size() - 1;
    }
    std::string conv(const std::string& name, const std::string& in, std::int64_t out_c, int k,
                     const std::string& group, std::vector<Frame> frames) {
        const auto& s = shape_of(in);
        return task(name, TaskKind::conv2d, {in}, {1, out_c, s[2], s[3]}, out_c * s[1] * k * k, group,
                    std::move(frames));
    }
    std::string same(const std::string& name, TaskKind kind, std::vector<std::string> ins, const std::string& group,
                     std::vector<Frame> frames) {
        auto shape = shape_of(ins.front());
        return task(name, kind, std::move(ins), shape, 0, group, std::move(frames));
    }

    bool plus_;
    ModelGraph g_;
    CodeMap cm_;
    int tensor_seq_ = 0;
    int stages_ = 0;
};

ModelPackage UnetBuilder::build(FixtureInfo* info) {
    constexpr std::int64_t kRes = 256;
    constexpr std::int64_t kBottleneck = 1024;
    constexpr std::int64_t kHead = 64;
    const std::int64_t channels[] = {64, 128, 256, 512};
    const std::string unet_path = "model/unet.py";
    const std::string blocks_path = "model/blocks.py";

    // blocks.py: layer statements referenced by the innermost frames.
    SourceWriter blocks;
    blocks.line("# Building blocks for the U-Net fixture model.");
    blocks.line("from torch import nn");
    blocks.line("import torch.nn.functional as F");
    blocks.line("");
    blocks.line("");
    blocks.line("class ConvPair(nn.Module):");
    blocks.line("    def forward(self, x):");
    const int pair_conv1 = blocks.line("        x = self.conv1(x)");
    const int pair_relu1 = blocks.line("        x = F.relu(x)");
    const int pair_conv2 = blocks.line("        x = self.conv2(x)");
    const int pair_relu2 = blocks.line("        x = F.relu(x)");
    blocks.line("        return x");
    blocks.line("");
    blocks.line("");
    blocks.line("class EncoderBlock(nn.Module):");
    blocks.line("    def forward(self, x):");
    const int enc_pair = blocks.line("        skip = self.convs(x)");
    const int enc_pool = blocks.line("        return skip, F.max_pool2d(skip, 2)");
    blocks.line("");
    blocks.line("");
    blocks.line("class StemBlock(nn.Module):");
    blocks.line("    def forward(self, x):");
    const int stem_relu1 = blocks.line("        x = F.relu(x)");
    const int stem_conv2 = blocks.line("        x = self.conv2(x)");
    const int stem_relu2 = blocks.line("        skip = F.relu(x)");
    const int stem_pool = blocks.line("        return skip, F.max_pool2d(skip, 2)");
    blocks.line("");
    blocks.line("");
    blocks.line("class Bottleneck(nn.Module):");
    blocks.line("    def forward(self, x):");
    const int bott_conv1 = blocks.line("        x = self.conv1(x)");
    const int bott_norm = blocks.line("        x = self.norm(x)");
    const int bott_conv2 = blocks.line("        x = self.conv2(x)");
    const int bott_relu = blocks.line("        x = F.relu(x)");
    int bott_extra1 = 0, bott_extra2 = 0;
    if (plus_) {
        bott_extra1 = blocks.line("        x = self.extra_conv1(x)");
        bott_extra2 = blocks.line("        x = self.extra_conv2(x)");
    }
    blocks.line("        return x");
    blocks.line("");
    blocks.line("");
    blocks.line("class DecoderBlock(nn.Module):");
    blocks.line("    def forward(self, x, skip):");
    const int dec_resize = blocks.line("        x = F.interpolate(x, scale_factor=2)");
    const int dec_up = blocks.line("        x = self.up_conv(x)");
    const int dec_cat = blocks.line("        x = torch.cat([x, skip], dim=1)");
    const int dec_pair = blocks.line("        return self.convs(x)");
    blocks.line("");
    blocks.line("");
    blocks.line("class ConvPairLinear(nn.Module):");
    blocks.line("    def forward(self, x):");
    const int lin_conv1 = blocks.line("        x = self.conv1(x)");
    const int lin_conv2 = blocks.line("        return self.conv2(x)");

    SourceWriter unet;
    unet.line("# U-Net segmentation model used by the workbench fixtures.");
    unet.line("import torch");
    unet.line("from torch import nn");
    unet.line("");
    unet.line("from .blocks import Bottleneck, DecoderBlock, EncoderBlock, StemBlock");
    unet.line("");
    unet.line("");
    unet.line("class UNet(nn.Module):");
    unet.line("    def forward(self, x):");
    const int u_stem = unet.line("        x0 = self.stem_conv(x)");
    const int u_enc1 = unet.line("        s1, x = self.enc1(x0)");
    const int u_enc2 = unet.line("        s2, x = self.enc2(x)");
    const int u_enc3 = unet.line("        s3, x = self.enc3(x)");
    const int u_enc4 = unet.line("        s4, x = self.enc4(x)");
    const int u_bott = unet.line("        x = self.bottleneck(x)");
    const int u_dec4 = unet.line("        x = self.dec4(x, s4)");
    const int u_dec3 = unet.line("        x = self.dec3(x, s3)");
    const int u_dec2 = unet.line("        x = self.dec2(x, s2)");
    const int u_dec1 = unet.line("        x = self.dec1(x, s1)");
    const int u_head1 = unet.line("        x = torch.relu(self.head_conv1(x))");
    const int u_head2 = unet.line("        x = torch.relu(self.head_conv2(x))");
    const int u_logits = unet.line("        x = self.classifier(x)");
    const int u_add = unet.line("        x = x + x0");
    const int u_softmax = unet.line("        return torch.softmax(x, dim=1)");

    auto U = [&](int line) { return Frame{&unet, unet_path, line}; };
    auto B = [&](int line) { return Frame{&blocks, blocks_path, line}; };

    g_.name = plus_ ? "unet-plus" : "unet";
    g_.fps_target = 60.0;
    const auto input = tensor({1, 3, kRes, kRes});

    // Encoder
    const int enc_calls[] = {u_enc1, u_enc2, u_enc3, u_enc4};
    std::vector<std::string> skips;
    std::string x0;
    std::string x = input;
    for (int s = 0; s < 4; ++s) {
        const auto c = channels[s];
        const auto grp = fmt::format("encoder/stage{}", s + 1);
        const auto pre = fmt::format("enc{}", s + 1);
        const auto call = U(enc_calls[s]);
        if (s == 0) {
            x0 = conv("stem_convolution", x, c, 3, grp, {U(u_stem)});
            x = same(pre + "_relu_1", TaskKind::elementwise, {x0}, grp, {B(stem_relu1), call});
            x = conv(pre + "_convolution_2", x, c, 3, grp, {B(stem_conv2), call});
            x = same(pre + "_relu_2", TaskKind::elementwise, {x}, grp, {B(stem_relu2), call});
            skips.push_back(x);
            const auto& sh = shape_of(x);
            x = task(pre + "_pool", TaskKind::pool, {x}, {1, c, sh[2] / 2, sh[3] / 2}, 0, grp, {B(stem_pool), call});
            continue;
        }
        x = conv(pre + "_convolution_1", x, c, 3, grp, {B(pair_conv1), B(enc_pair), call});
        x = same(pre + "_relu_1", TaskKind::elementwise, {x}, grp, {B(pair_relu1), B(enc_pair), call});
        x = conv(pre + "_convolution_2", x, c, 3, grp, {B(pair_conv2), B(enc_pair), call});
        x = same(pre + "_relu_2", TaskKind::elementwise, {x}, grp, {B(pair_relu2), B(enc_pair), call});
        skips.push_back(x);
        const auto& sh = shape_of(x);
        x = task(pre + "_pool", TaskKind::pool, {x}, {1, c, sh[2] / 2, sh[3] / 2}, 0, grp, {B(enc_pool), call});
    }

    // Bottleneck
    {
        const std::string grp = "bottleneck";
        x = conv("bottleneck_convolution_1", x, kBottleneck, 3, grp, {B(bott_conv1), U(u_bott)});
        x = same("bottleneck_layernorm", TaskKind::layernorm, {x}, grp, {B(bott_norm), U(u_bott)});
        x = conv("bottleneck_convolution_2", x, kBottleneck, 3, grp, {B(bott_conv2), U(u_bott)});
        x = same("bottleneck_relu", TaskKind::elementwise, {x}, grp, {B(bott_relu), U(u_bott)});
        if (plus_) {
            x = conv("bottleneck_extra_convolution_1", x, kBottleneck, 3, grp, {B(bott_extra1), U(u_bott)});
            if (info) info->added_convs.push_back(g_.tasks.back().id);
            x = conv("bottleneck_extra_convolution_2", x, kBottleneck, 3, grp, {B(bott_extra2), U(u_bott)});
            if (info) info->added_convs.push_back(g_.tasks.back().id);
        }
    }

    // Decoder
    const int dec_calls[] = {u_dec1, u_dec2, u_dec3, u_dec4};
    for (int s = 3; s >= 0; --s) {
        const auto c = channels[s];
        const auto grp = fmt::format("decoder/stage{}", s + 1);
        const auto pre = fmt::format("dec{}", s + 1);
        const auto call = U(dec_calls[s]);
        const auto& sh = shape_of(x);
        x = task(pre + "_upsample", TaskKind::resize, {x}, {1, sh[1], sh[2] * 2, sh[3] * 2}, 0, grp,
                 {B(dec_resize), call});
        x = conv(pre + "_up_convolution", x, c, 2, grp, {B(dec_up), call});
        const auto& up = shape_of(x);
        x = task(pre + "_concat", TaskKind::concat, {x, skips[static_cast<std::size_t>(s)]},
                 {1, 2 * c, up[2], up[3]}, 0, grp, {B(dec_cat), call});
        x = conv(pre + "_convolution_1", x, c, 3, grp, {B(lin_conv1), B(dec_pair), call});
        x = conv(pre + "_convolution_2", x, c, 3, grp, {B(lin_conv2), B(dec_pair), call});
    }

    // Head
    {
        const std::string grp = "decoder/head";
        x = conv("head_convolution_1", x, kHead, 3, grp, {U(u_head1)});
        x = same("head_relu_1", TaskKind::elementwise, {x}, grp, {U(u_head1)});
        x = conv("head_convolution_2", x, kHead, 3, grp, {U(u_head2)});
        x = same("head_relu_2", TaskKind::elementwise, {x}, grp, {U(u_head2)});
        x = conv("head_classifier", x, kHead, 1, grp, {U(u_logits)});
        x = same("head_residual_add", TaskKind::elementwise, {x, x0}, grp, {U(u_add)});
        same("head_softmax", TaskKind::softmax, {x}, grp, {U(u_softmax)});
    }

    if (info) info->stage_count = stages_;

    ModelPackage pkg;
    pkg.manifest.name = g_.name;
    pkg.manifest.created_at = kFixtureTimestamp;
    pkg.manifest.attributes = nlohmann::json{{"pool_window", 4}};
    g_.reindex();
    pkg.graph = g_;
    pkg.code_map = cm_;
    pkg.sources[unet_path] = unet.text();
    pkg.sources[blocks_path] = blocks.text();
    pkg.members = package_members(pkg);
    // Round-trip so macs are derived exactly as any reader would see them.
    return parse_package_members(pkg.members);
}

}  // namespace

ModelPackage unet(FixtureInfo* info) { return UnetBuilder(false).build(info); }
ModelPackage unet_plus(FixtureInfo* info) { return UnetBuilder(true).build(info); }

ModelGraph random_graph(const RandomGraphOptions& opts) {
    Rng rng(opts.seed);
    ModelGraph g;
    g.name = fmt::format("random-{}-{}", opts.tasks, opts.seed);
    static const std::vector<std::string> kGroups = {"", "alpha", "alpha/one", "alpha/two", "beta", "beta/inner/deep"};

    std::vector<std::string> available;
    const int n_inputs = rng.uniform(1, 2);
    for (int i = 0; i < n_inputs; ++i) {
        auto id = fmt::format("in{}", i);
        g.tensors.push_back(Tensor{id, rng.uniform(1000, 200000), std::nullopt, NumericFormat::fp16});
        available.push_back(id);
    }

    for (int i = 0; i < opts.tasks; ++i) {
        HardwareTask t;
        t.id = i;
        const int roll = rng.uniform(0, 99);
        if (roll < 30) t.kind = TaskKind::conv2d;
        else if (roll < 40) t.kind = TaskKind::matmul;
        else if (roll < 50) t.kind = TaskKind::pool;
        else if (roll < 68) t.kind = TaskKind::elementwise;
        else if (roll < 78) t.kind = TaskKind::concat;
        else if (roll < 84) t.kind = TaskKind::resize;
        else if (roll < 90) t.kind = opts.softmax ? TaskKind::softmax : TaskKind::elementwise;
        else if (roll < 95) t.kind = TaskKind::layernorm;
        else t.kind = TaskKind::convert;

        int want = t.kind == TaskKind::concat ? rng.uniform(2, std::max(2, opts.max_inputs))
                                              : rng.uniform(1, std::max(1, std::min(2, opts.max_inputs)));
        want = std::min<int>(want, static_cast<int>(available.size()));
        if (t.kind == TaskKind::concat && want < 2) t.kind = TaskKind::elementwise;
        while (static_cast<int>(t.inputs.size()) < want) {
            // Prefer recent tensors so graphs are deep rather than flat.
            const int recent = std::min<int>(8, static_cast<int>(available.size()));
            const auto& pick = rng.uniform(0, 3) == 0
                                   ? available[static_cast<std::size_t>(rng.uniform(0, static_cast<int>(available.size()) - 1))]
                                   : available[available.size() - 1 - static_cast<std::size_t>(rng.uniform(0, recent - 1))];
            if (std::find(t.inputs.begin(), t.inputs.end(), pick) == t.inputs.end()) t.inputs.push_back(pick);
        }

        const int outputs = rng.uniform(0, 9) == 0 ? 2 : 1;
        std::int64_t out_elems = 0;
        for (int o = 0; o < outputs; ++o) {
            auto id = fmt::format("t{}_{}", i, o);
            const std::int64_t elems = rng.uniform(1000, 400000);
            out_elems += elems;
            g.tensors.push_back(Tensor{id, elems, std::nullopt, NumericFormat::fp16});
            t.outputs.push_back(id);
            available.push_back(id);
        }
        t.name = fmt::format("{}_{}", to_string(t.kind), i);
        switch (t.kind) {
            case TaskKind::conv2d:
            case TaskKind::matmul:
                t.weight_count = rng.uniform(1000, 2000000);
                t.macs = out_elems * rng.uniform(8, 600);
                break;
            case TaskKind::pool: t.macs = out_elems * 4; break;
            case TaskKind::concat: t.macs = 0; break;
            default: t.macs = out_elems; break;
        }
        t.group = kGroups[static_cast<std::size_t>(rng.uniform(0, static_cast<int>(kGroups.size()) - 1))];
        g.tasks.push_back(std::move(t));
    }
    g.reindex();
    return g;
}

ModelPackage random_package(const RandomGraphOptions& opts) {
    ModelPackage pkg;
    pkg.graph = random_graph(opts);
    pkg.manifest.name = pkg.graph.name;
    pkg.manifest.created_at = kFixtureTimestamp;
    pkg.manifest.attributes = nlohmann::json::object();
    pkg.members = package_members(pkg);
    return pkg;
}

}  // namespace tasklens::fixtures
