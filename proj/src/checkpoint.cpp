#include "sft/checkpoint.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

#include "sft/binio.hpp"

namespace sft {

void save_checkpoint(const NamedParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write("SFCK", 4);
    binio::put_u32(os, 1);
    binio::put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, p] : params) {
        if (name.size() > 0xffff) throw std::runtime_error("parameter name too long");
        binio::put_u16(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Tensor& v = p->value;
        binio::put_u8(os, static_cast<std::uint8_t>(v.rank()));
        for (int a = 0; a < v.rank(); ++a) {
            binio::put_u32(os, static_cast<std::uint32_t>(v.extent(a)));
        }
        for (std::int64_t i = 0; i < v.size(); ++i) binio::put_f64(os, v[i]);
    }
    if (!os) throw std::runtime_error("short write to " + path);
}

void load_checkpoint(const NamedParams& params, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::string(magic, 4) != "SFCK") {
        throw std::runtime_error(path + " is not a checkpoint file");
    }
    std::uint32_t version = binio::get_u32(is);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    std::uint32_t count = binio::get_u32(is);

    std::map<std::string, Parameter*> by_name;
    for (const auto& [name, p] : params) by_name[name] = p;

    std::map<std::string, bool> seen;
    for (std::uint32_t k = 0; k < count; ++k) {
        std::uint16_t len = binio::get_u16(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (is.gcount() != len) throw std::runtime_error("truncated checkpoint");
        int rank = binio::get_u8(is);
        std::vector<int> shape;
        for (int a = 0; a < rank; ++a) shape.push_back(static_cast<int>(binio::get_u32(is)));
        std::vector<double> values(static_cast<std::size_t>(shape_product(shape)));
        for (double& v : values) v = binio::get_f64(is);
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw std::runtime_error("checkpoint has unknown parameter: " + name);
        }
        if (it->second->value.shape() != shape) {
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        }
        it->second->value = Tensor(shape, std::move(values));
        seen[name] = true;
    }
    for (const auto& [name, p] : params) {
        (void)p;
        if (!seen.count(name)) {
            throw std::runtime_error("checkpoint missing parameter: " + name);
        }
    }
}

}  // namespace sft
