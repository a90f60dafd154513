#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsc/error.hpp"
#include "lsc/mathcore/mat.hpp"
#include "lsc/sdfdecoder/decoder.hpp"
#include "lsc/vnn/encoder.hpp"

namespace lsc::training {

// Checkpoint persistence. Layout: magic "LSCK", a little-endian u32 version,
// a u32 header length, a JSON header (dimensions, seed, parameter count),
// then raw little-endian f32 weight blobs in visit order, encoder first.
// Writes go to a temp file renamed into place, so a reader never observes a
// half-written checkpoint.

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'L', 'S', 'C', 'K'};

struct Checkpoint {
    vnn::EncoderWeights encoder;
    sdf::DecoderWeights decoder;
    std::uint64_t seed = 0;
};

namespace detail {

template <class Weights, class Visit>
std::int64_t param_count(const Weights& w, Visit&& visit) {
    std::int64_t n = 0;
    visit(w, [&](const std::string&, const Mat& m) { n += m.size(); });
    return n;
}

inline void append_u32(std::string* out, std::uint32_t v) {
    out->append(reinterpret_cast<const char*>(&v), 4);
}

inline void append_f32_blob(std::string* out, const Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        float f = float(m.data()[i]); // row-major storage matches (row, col) order
        out->append(reinterpret_cast<const char*>(&f), 4);
    }
}

inline void read_f32_blob(const std::string& bytes, std::size_t* offset, Mat* m) {
    for (Eigen::Index i = 0; i < m->size(); ++i) {
        float f;
        std::memcpy(&f, bytes.data() + *offset, 4);
        *offset += 4;
        m->data()[i] = double(f);
    }
}

} // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& cp) {
    std::int64_t count = detail::param_count(cp.encoder, [](auto& w, auto&& f) {
                             vnn::visit_encoder_params(w, f);
                         }) +
                         detail::param_count(cp.decoder, [](auto& w, auto&& f) {
                             sdf::visit_decoder_params(w, f);
                         });

    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["seed"] = cp.seed;
    header["param_count"] = count;
    std::vector<std::int64_t> widths(cp.encoder.config.widths.begin(),
                                     cp.encoder.config.widths.end());
    header["encoder"] = {{"widths", widths},
                         {"k_graph", cp.encoder.config.k_graph},
                         {"heads", cp.encoder.config.heads},
                         {"min_tokens", cp.encoder.config.min_tokens}};
    header["decoder"] = {{"code_dim", cp.decoder.config.code_dim},
                         {"hidden", cp.decoder.config.hidden}};
    std::string header_bytes = header.dump();

    std::string bytes;
    bytes.reserve(12 + header_bytes.size() + std::size_t(4 * count));
    bytes.append(kCheckpointMagic, 4);
    detail::append_u32(&bytes, kCheckpointVersion);
    detail::append_u32(&bytes, std::uint32_t(header_bytes.size()));
    bytes += header_bytes;
    vnn::visit_encoder_params(cp.encoder, [&](const std::string&, const Mat& m) {
        detail::append_f32_blob(&bytes, m);
    });
    sdf::visit_decoder_params(cp.decoder, [&](const std::string&, const Mat& m) {
        detail::append_f32_blob(&bytes, m);
    });

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorKind::Data, "checkpoint: cannot open " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        require(out.good(), ErrorKind::Data, "checkpoint: write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, ErrorKind::Data, "checkpoint: rename failed: " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Data, "checkpoint: cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    require(bytes.size() >= 12, ErrorKind::Format, "checkpoint: file too short");
    require(std::memcmp(bytes.data(), kCheckpointMagic, 4) == 0, ErrorKind::Format,
            "checkpoint: bad magic");
    std::uint32_t version, header_len;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&header_len, bytes.data() + 8, 4);
    require(version == kCheckpointVersion, ErrorKind::Format,
            "checkpoint: unsupported version " + std::to_string(version));
    require(bytes.size() >= 12 + std::size_t(header_len), ErrorKind::Format,
            "checkpoint: truncated header");

    nlohmann::json header =
        nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len,
                              /*cb=*/nullptr, /*allow_exceptions=*/false);
    require(!header.is_discarded() && header.is_object(), ErrorKind::Format,
            "checkpoint: unparseable header");

    Checkpoint cp;
    std::int64_t declared = 0;
    try {
        cp.seed = header.at("seed").get<std::uint64_t>();
        declared = header.at("param_count").get<std::int64_t>();
        const auto& enc = header.at("encoder");
        std::vector<std::int64_t> widths = enc.at("widths").get<std::vector<std::int64_t>>();
        vnn::EncoderConfig ec;
        ec.widths.assign(widths.begin(), widths.end());
        ec.k_graph = enc.at("k_graph").get<Eigen::Index>();
        ec.heads = enc.at("heads").get<Eigen::Index>();
        ec.min_tokens = enc.at("min_tokens").get<Eigen::Index>();
        sdf::DecoderConfig dc;
        const auto& dec = header.at("decoder");
        dc.code_dim = dec.at("code_dim").get<Eigen::Index>();
        dc.hidden = dec.at("hidden").get<Eigen::Index>();
        cp.encoder = vnn::init_encoder(ec, 0); // allocates the right shapes
        cp.decoder = sdf::init_decoder(dc, 0);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, std::string("checkpoint: malformed header: ") + e.what());
    }

    std::int64_t count = detail::param_count(cp.encoder, [](auto& w, auto&& f) {
                             vnn::visit_encoder_params(w, f);
                         }) +
                         detail::param_count(cp.decoder, [](auto& w, auto&& f) {
                             sdf::visit_decoder_params(w, f);
                         });
    require(declared == count, ErrorKind::Format,
            "checkpoint: parameter count does not match the declared dimensions");
    require(bytes.size() == 12 + std::size_t(header_len) + std::size_t(4 * count),
            ErrorKind::Format, "checkpoint: truncated or oversized weight blob");

    std::size_t offset = 12 + header_len;
    vnn::visit_encoder_params(cp.encoder, [&](const std::string&, Mat& m) {
        detail::read_f32_blob(bytes, &offset, &m);
    });
    sdf::visit_decoder_params(cp.decoder, [&](const std::string&, Mat& m) {
        detail::read_f32_blob(bytes, &offset, &m);
    });
    return cp;
}

// Guards a fixed-dimension pipeline against a checkpoint of different shape.
inline void require_dims(const Checkpoint& cp, const vnn::EncoderConfig& ec,
                         const sdf::DecoderConfig& dc) {
    bool same = cp.encoder.config.widths == ec.widths &&
                cp.encoder.config.k_graph == ec.k_graph &&
                cp.encoder.config.heads == ec.heads &&
                cp.encoder.config.min_tokens == ec.min_tokens &&
                cp.decoder.config.code_dim == dc.code_dim &&
                cp.decoder.config.hidden == dc.hidden;
    require(same, ErrorKind::Config,
            "checkpoint dimensions do not match the configured pipeline");
}

} // namespace lsc::training
