#include "gatgpt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

namespace gatgpt {

namespace {

using nlohmann::json;

constexpr const char* kMetadataKey = "__metadata__";

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_u64(std::string_view in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[static_cast<std::size_t>(i)])) << (8 * i);
    return v;
}

void put_f32(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

double get_f32(const char* in) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    return static_cast<double>(std::bit_cast<float>(bits));
}

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join_reals(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i)
        out += (i ? "," : "") + format_real(values[i]);
    return out;
}

std::vector<double> split_reals(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(std::stod(item));
    return out;
}

json config_metadata(const ModelConfig& c) {
    json m = json::object();
    m["layers"] = std::to_string(c.layers);
    m["d_model"] = std::to_string(c.d_model);
    m["n_heads"] = std::to_string(c.n_heads);
    m["gat_heads"] = std::to_string(c.gat_heads);
    m["d_head"] = std::to_string(c.gat_head_dim());
    m["in_channels"] = std::to_string(c.in_channels);
    m["out_channels"] = std::to_string(c.out_channels);
    m["kernel_width"] = std::to_string(c.kernel_width);
    m["leaky_slope"] = format_real(c.leaky_slope);
    return m;
}

ModelConfig config_from_metadata(const json& m) {
    const auto field = [&](const char* key) -> std::string {
        if (!m.contains(key) || !m.at(key).is_string())
            throw CheckpointError(std::string("checkpoint metadata is missing '") + key + "'");
        return m.at(key).get<std::string>();
    };
    ModelConfig c;
    try {
        c.layers = std::stoul(field("layers"));
        c.d_model = std::stoul(field("d_model"));
        c.n_heads = std::stoul(field("n_heads"));
        c.gat_heads = std::stoul(field("gat_heads"));
        c.d_head = std::stoul(field("d_head"));
        c.in_channels = std::stoul(field("in_channels"));
        c.out_channels = std::stoul(field("out_channels"));
        c.kernel_width = std::stoul(field("kernel_width"));
        c.leaky_slope = std::stod(field("leaky_slope"));
    } catch (const std::logic_error& e) {
        throw CheckpointError(std::string("checkpoint metadata is malformed: ") + e.what());
    }
    return c;
}

} // namespace

std::string serialize_checkpoint(const ModelParams& params, const std::optional<NormStats>& stats) {
    json header = json::object();
    json meta = config_metadata(params.config);
    if (stats) {
        meta["norm_mean"] = join_reals(stats->mean);
        meta["norm_std"] = join_reals(stats->std);
    }
    header[kMetadataKey] = meta;

    std::string payload;
    params.for_each([&](const Parameter& p) {
        header[p.name] = {{"shape", p.shape}, {"dtype", "f32"}, {"offset", payload.size()}, {"frozen", p.frozen}};
        for (Eigen::Index i = 0; i < p.value.size(); ++i)
            put_f32(payload, p.value.data()[i]);
    });

    const std::string text = header.dump();
    std::string out;
    out.reserve(8 + text.size() + payload.size());
    put_u64(out, text.size());
    out += text;
    out += payload;
    return out;
}

ModelParams parse_checkpoint(std::string_view bytes, NormStats* stats, const std::optional<ModelConfig>& expected) {
    if (bytes.size() < 8)
        throw CheckpointError("truncated checkpoint: missing 8-byte header length");
    const std::uint64_t header_len = get_u64(bytes);
    if (header_len > bytes.size() - 8)
        throw CheckpointError("truncated checkpoint: header declares " + std::to_string(header_len) +
                              " bytes, file has " + std::to_string(bytes.size() - 8));
    json header;
    try {
        header = json::parse(bytes.substr(8, header_len));
    } catch (const json::parse_error& e) {
        throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
    }
    if (!header.is_object())
        throw CheckpointError("malformed checkpoint header: expected a JSON object");
    const std::string_view payload = bytes.substr(8 + header_len);

    ModelConfig config;
    if (header.contains(kMetadataKey))
        config = config_from_metadata(header.at(kMetadataKey));
    else if (expected)
        config = *expected;
    else
        throw CheckpointError("checkpoint has no __metadata__ entry and no expected config was given");
    if (expected) {
        if (config.layers != expected->layers || config.d_model != expected->d_model ||
            config.n_heads != expected->n_heads || config.gat_heads != expected->gat_heads ||
            config.gat_head_dim() != expected->gat_head_dim() || config.in_channels != expected->in_channels ||
            config.out_channels != expected->out_channels || config.kernel_width != expected->kernel_width)
            throw CheckpointError("checkpoint config does not match the expected model config");
    }

    ModelParams params;
    try {
        params = make_model(config);
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
    }

    std::map<std::string, Parameter*> schema;
    params.for_each([&](Parameter& p) { schema.emplace(p.name, &p); });

    for (const auto& [name, entry] : header.items()) {
        if (name == kMetadataKey)
            continue;
        auto it = schema.find(name);
        if (it == schema.end())
            throw CheckpointError("unknown tensor name '" + name + "' in checkpoint header");
        Parameter& p = *it->second;
        if (!entry.is_object() || !entry.contains("shape") || !entry.contains("offset") || !entry.contains("dtype"))
            throw CheckpointError("malformed header entry for tensor '" + name + "'");
        if (entry.at("dtype") != "f32")
            throw CheckpointError("tensor '" + name + "' has unsupported dtype " + entry.at("dtype").dump());
        std::vector<std::size_t> shape;
        try {
            shape = entry.at("shape").get<std::vector<std::size_t>>();
        } catch (const json::exception&) {
            throw CheckpointError("malformed shape for tensor '" + name + "'");
        }
        if (shape != p.shape)
            throw CheckpointError("shape mismatch for tensor '" + name + "': checkpoint has " +
                                  shape_to_string(shape) + ", model expects " + shape_to_string(p.shape));
        if (!entry.at("offset").is_number_unsigned() || (entry.contains("frozen") && !entry.at("frozen").is_boolean()))
            throw CheckpointError("malformed header entry for tensor '" + name + "'");
        const auto offset = entry.at("offset").get<std::uint64_t>();
        const std::uint64_t bytes_needed = 4ULL * p.numel();
        if (offset > payload.size() || bytes_needed > payload.size() - offset)
            throw CheckpointError("truncated payload for tensor '" + name + "': needs bytes [" +
                                  std::to_string(offset) + ", " + std::to_string(offset + bytes_needed) +
                                  "), payload has " + std::to_string(payload.size()));
        for (std::size_t i = 0; i < p.numel(); ++i)
            p.value.data()[i] = get_f32(payload.data() + offset + 4 * i);
        if (entry.contains("frozen"))
            p.frozen = entry.at("frozen").get<bool>();
        schema.erase(it);
    }
    if (!schema.empty())
        throw CheckpointError("checkpoint is missing tensor '" + schema.begin()->first + "'");

    if (stats) {
        *stats = NormStats{};
        if (header.contains(kMetadataKey)) {
            const auto& meta = header.at(kMetadataKey);
            if (meta.contains("norm_mean") && meta.contains("norm_std")) {
                try {
                    stats->mean = split_reals(meta.at("norm_mean").get<std::string>());
                    stats->std = split_reals(meta.at("norm_std").get<std::string>());
                } catch (const std::exception& e) {
                    throw CheckpointError(std::string("checkpoint normalization statistics are malformed: ") + e.what());
                }
            }
        }
    }
    return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path,
                     const std::optional<NormStats>& stats) {
    const std::string bytes = serialize_checkpoint(params, stats);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw CheckpointError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw CheckpointError("failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path, NormStats* stats,
                            const std::optional<ModelConfig>& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError("cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes, stats, expected);
}

} // namespace gatgpt
