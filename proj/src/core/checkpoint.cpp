#include "core/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace ropnet::core {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

float get_f32(std::istream& is) {
    uint32_t v = get_u32(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

void write_entry(std::ostream& os, const std::string& name, const Tensor<float>& t) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<uint32_t>(t.shape.size()));
    for (long d : t.shape) put_u64(os, static_cast<uint64_t>(d));
    for (float v : t.data) put_f32(os, v);
}

}  // namespace

void save_checkpoint(const ParamStore<float>& store, const std::string& path,
                     bool with_optimizer_state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(Status::Data, "cannot open checkpoint for writing: " + path);
    os.write(kCheckpointMagic, 10);
    put_u32(os, kCheckpointVersion);
    uint64_t count = store.entries().size();
    if (with_optimizer_state) count += 2 * store.entries().size() + 1;
    put_u64(os, count);
    for (const auto& [name, e] : store.entries()) write_entry(os, name, e.value);
    if (with_optimizer_state) {
        for (const auto& [name, e] : store.entries())
            write_entry(os, "adam/m/" + name, e.adam_m);
        for (const auto& [name, e] : store.entries())
            write_entry(os, "adam/v/" + name, e.adam_v);
        Tensor<float> step({1}, {static_cast<float>(store.step())});
        write_entry(os, "adam/step", step);
    }
    if (!os) throw Error(Status::Data, "failed writing checkpoint: " + path);
}

void load_checkpoint(ParamStore<float>& store, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(Status::Data, "cannot open checkpoint: " + path);
    char magic[10];
    is.read(magic, 10);
    if (!is || std::memcmp(magic, kCheckpointMagic, 10) != 0)
        throw Error(Status::Data, "not a checkpoint file: " + path);
    uint32_t version = get_u32(is);
    if (version != kCheckpointVersion)
        throw Error(Status::Data, "unsupported checkpoint version " +
                                      std::to_string(version));
    uint64_t count = get_u64(is);
    store.entries().clear();
    store.set_step(0);

    struct Pending {
        std::string name;
        Tensor<float> tensor;
    };
    std::vector<Pending> adam_entries;
    for (uint64_t e = 0; e < count; ++e) {
        uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint32_t rank = get_u32(is);
        std::vector<long> shape(rank);
        long numel = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<long>(get_u64(is));
            numel *= shape[i];
        }
        Tensor<float> t = Tensor<float>::zeros(shape);
        for (long i = 0; i < numel; ++i) t.data[static_cast<size_t>(i)] = get_f32(is);
        if (!is) throw Error(Status::Data, "truncated checkpoint: " + path);
        if (name.rfind("adam/", 0) == 0)
            adam_entries.push_back({std::move(name), std::move(t)});
        else
            store.add(name, std::move(t));
    }
    for (auto& p : adam_entries) {
        if (p.name == "adam/step") {
            store.set_step(static_cast<long>(p.tensor.data.at(0)));
        } else if (p.name.rfind("adam/m/", 0) == 0) {
            store.entries().at(p.name.substr(7)).adam_m = std::move(p.tensor);
        } else if (p.name.rfind("adam/v/", 0) == 0) {
            store.entries().at(p.name.substr(7)).adam_v = std::move(p.tensor);
        } else {
            throw Error(Status::Data, "unknown optimizer entry: " + p.name);
        }
    }
}

}  // namespace ropnet::core
