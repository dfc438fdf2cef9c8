#include "ldd/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace ldd {

static constexpr char kMagic[4] = {'L', 'D', 'D', 'C'};
static constexpr uint32_t kVersion = 1;

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& p : params)
        if (p.name == name) return &p.value;
    return nullptr;
}

const std::string* Checkpoint::meta(const std::string& key) const {
    for (const auto& [k, v] : metadata)
        if (k == key) return &v;
    return nullptr;
}

uint64_t Checkpoint::param_hash() const {
    Fnv1a h;
    for (const auto& p : params) {
        h.update(p.name);
        uint64_t ch = p.value.content_hash();
        h.update_pod(ch);
    }
    return h.digest();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ostringstream os(std::ios::binary);
    io::write_bytes(os, kMagic, 4);
    io::write_u32(os, kVersion);
    io::write_u32(os, static_cast<uint32_t>(ckpt.metadata.size()));
    for (const auto& [k, v] : ckpt.metadata) io::write_string(os, k + "=" + v);
    io::write_u32(os, static_cast<uint32_t>(ckpt.params.size()));
    for (const auto& p : ckpt.params) {
        io::write_string(os, p.name);
        io::write_u32(os, static_cast<uint32_t>(p.value.rank()));
        for (int d : p.value.shape()) io::write_u32(os, static_cast<uint32_t>(d));
        io::write_bytes(os, p.value.data(), static_cast<size_t>(p.value.size()) * sizeof(double));
    }
    write_file_atomic(path, os.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoError::Code::truncated, "cannot open " + path.string());
    char magic[4];
    io::read_bytes(is, magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw IoError(IoError::Code::malformed, "bad checkpoint magic in " + path.string());
    uint32_t version = io::read_u32(is);
    if (version != kVersion)
        throw IoError(IoError::Code::version_mismatch, "checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kVersion));

    Checkpoint ckpt;
    uint32_t n_meta = io::read_u32(is);
    for (uint32_t i = 0; i < n_meta; ++i) {
        std::string kv = io::read_string(is);
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw IoError(IoError::Code::malformed, "metadata entry without '='");
        ckpt.metadata.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    uint32_t n_params = io::read_u32(is);
    for (uint32_t i = 0; i < n_params; ++i) {
        NamedTensor nt;
        nt.name = io::read_string(is);
        uint32_t rank = io::read_u32(is);
        if (rank > 4) throw IoError(IoError::Code::malformed, "implausible rank " + std::to_string(rank));
        std::vector<int> shape;
        for (uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(io::read_u32(is)));
        Tensor t(shape);
        io::read_bytes(is, t.data(), static_cast<size_t>(t.size()) * sizeof(double));
        nt.value = std::move(t);
        ckpt.params.push_back(std::move(nt));
    }
    return ckpt;
}

}  // namespace ldd
