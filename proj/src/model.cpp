#include "gatgpt/model.hpp"

#include <stdexcept>
#include <string>

namespace gatgpt {

Tensor3 build_model_input(const TimeSeriesTensor& t) {
    const std::size_t channels = t.channels();
    Tensor3 input(t.nodes(), t.steps(), channels + 1);
    for (std::size_t n = 0; n < t.nodes(); ++n)
        for (std::size_t s = 0; s < t.steps(); ++s) {
            const bool seen = t.observed(n, s);
            for (std::size_t c = 0; c < channels; ++c)
                input(n, s, c) = seen ? t.values(n, s, c) : 0.0;
            input(n, s, channels) = seen ? 1.0 : 0.0;
        }
    return input;
}

Tensor3 model_forward_input(const Tensor3& input, const AdjacencyMatrix& a, const ModelParams& p, ModelCache* cache) {
    if (input.width() != p.config.model_in_channels())
        throw std::invalid_argument("model expects " + std::to_string(p.config.model_in_channels()) +
                                    " input channels (data + mask), got " + std::to_string(input.width()));
    Tensor3 embedded = embed(input, p.embedding);
    GatCache* gat_cache = cache ? &cache->gat : nullptr;
    Tensor3 spatial = gat_over_time(embedded, a, p.gat, gat_cache);
    Tensor3 hidden = backbone_forward(spatial, p.blocks, p.config.n_heads, cache ? &cache->backbone : nullptr);
    Tensor3 out = output_head(hidden, p.head);
    if (cache) {
        cache->input = input;
        cache->embedded = std::move(embedded);
        cache->spatial = std::move(spatial);
        cache->hidden = std::move(hidden);
    }
    return out;
}

Tensor3 model_forward(const TimeSeriesTensor& t, const AdjacencyMatrix& a, const ModelParams& p,
                      const ForwardOptions& options, ModelCache* cache) {
    if (t.channels() != p.config.in_channels)
        throw std::invalid_argument("model expects " + std::to_string(p.config.in_channels) +
                                    " data channels, got " + std::to_string(t.channels()));
    const Tensor3 input = build_model_input(t);
    if (options.mode == Mode::Train && options.dropedge_p > 0.0)
        return model_forward_input(input, drop_edge(a, options.dropedge_p, options.seed), p, cache);
    return model_forward_input(input, a, p, cache);
}

void model_backward(const ModelCache& cache, const Tensor3& grad_out, const ModelParams& p, ModelParams& grads) {
    const Tensor3 d_hidden = output_head_backward(cache.hidden, grad_out, p.head, grads.head);
    const Tensor3 d_spatial = backbone_backward(cache.backbone, d_hidden, p.blocks, p.config.n_heads, grads.blocks);
    const Tensor3 d_embedded = gat_over_time_backward(cache.gat, d_spatial, p.gat, grads.gat);
    embed_backward(cache.input, d_embedded, p.embedding, grads.embedding);
}

} // namespace gatgpt
