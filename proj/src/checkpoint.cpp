#include "rltopic/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "rltopic/errors.hpp"

namespace rltopic {

namespace {

class Writer {
   public:
    void u16(std::uint16_t v) {
        bytes.push_back(static_cast<std::uint8_t>(v));
        bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::size_t v) {
        if (v > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("checkpoint: value exceeds u32");
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
    void raw(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

    std::vector<std::uint8_t> bytes;
};

class Reader {
   public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string raw(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

   private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated file");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const PolicyModel& model) {
    const ModelConfig& c = model.config();
    Writer w;
    w.raw("NTM1");
    w.u16(kCheckpointVersion);
    w.u32(c.num_topics);
    w.u32(c.vocab_size);
    w.u32(c.input_dim);
    w.u32(c.hidden_layers.size());
    for (std::size_t h : c.hidden_layers) w.u32(h);
    const auto& params = model.params().all();
    w.u32(params.size());
    for (const Parameter& p : params) {
        w.u32(p.name.size());
        w.raw(p.name);
        w.u32(p.value.rank());
        for (std::size_t d : p.value.shape()) w.u32(d);
        for (real v : p.value.data()) w.f32(static_cast<float>(v));
    }
    return std::move(w.bytes);
}

PolicyModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.raw(4) != "NTM1") throw FormatError("checkpoint: bad magic");
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    ModelConfig c;
    c.num_topics = r.u32();
    c.vocab_size = r.u32();
    c.input_dim = r.u32();
    c.hidden_layers.resize(r.u32());
    for (std::size_t& h : c.hidden_layers) h = r.u32();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: invalid architecture: ") + e.what());
    }
    PolicyModel model(c);
    auto& params = model.params().all();
    const std::uint32_t count = r.u32();
    if (count != params.size()) {
        throw FormatError("checkpoint: expected " + std::to_string(params.size()) + " tensors, found " +
                          std::to_string(count));
    }
    for (Parameter& p : params) {
        const std::string name = r.raw(r.u32());
        if (name != p.name) throw FormatError("checkpoint: expected tensor '" + p.name + "', found '" + name + "'");
        std::vector<std::size_t> shape(r.u32());
        for (std::size_t& d : shape) d = r.u32();
        if (shape != p.value.shape()) {
            throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                              shape_string(p.value.shape()));
        }
        for (real& v : p.value.data()) {
            const float f = r.f32();
            if (!std::isfinite(f)) throw FormatError("checkpoint: non-finite value in '" + name + "'");
            v = f;
        }
    }
    if (!r.done()) throw FormatError("checkpoint: trailing bytes");
    return model;
}

void save_checkpoint(const PolicyModel& model, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed: " + path.string());
}

PolicyModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace rltopic
