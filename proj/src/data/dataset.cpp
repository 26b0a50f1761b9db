#include "data/dataset.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "config.hpp"

namespace fs = std::filesystem;

namespace ropnet::data {

namespace {

std::string pair_path(const std::string& dir, long id) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06ld.pair", id);
    return (fs::path(dir) / "pairs" / name).string();
}

void write_section(std::FILE* f, const geom::PointCloud& cloud, const char* tag) {
    std::fprintf(f, "# %s %ld normals=%d\n", tag, cloud.size(), cloud.normals ? 1 : 0);
    for (long i = 0; i < cloud.size(); ++i) {
        if (cloud.normals) {
            std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g\n", cloud.points(i, 0),
                         cloud.points(i, 1), cloud.points(i, 2), (*cloud.normals)(i, 0),
                         (*cloud.normals)(i, 1), (*cloud.normals)(i, 2));
        } else {
            std::fprintf(f, "%.17g %.17g %.17g\n", cloud.points(i, 0), cloud.points(i, 1),
                         cloud.points(i, 2));
        }
    }
}

geom::PointCloud parse_section(std::istream& is, long count, bool normals,
                               const std::string& path) {
    geom::PointCloud cloud;
    cloud.points.resize(count, 3);
    if (normals) cloud.normals = geom::PointMatrix(count, 3);
    std::string line;
    long row = 0;
    while (row < count && std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        ss >> cloud.points(row, 0) >> cloud.points(row, 1) >> cloud.points(row, 2);
        if (normals)
            ss >> (*cloud.normals)(row, 0) >> (*cloud.normals)(row, 1) >>
                (*cloud.normals)(row, 2);
        if (!ss) throw Error(Status::Data, "bad pair row in " + path + ": " + line);
        ++row;
    }
    if (row != count) throw Error(Status::Data, "truncated pair file: " + path);
    return cloud;
}

struct ManifestRow {
    long id;
    uint64_t seed;
    std::string category;
    geom::RigidTransform gt;
};

std::vector<ManifestRow> load_manifest(const std::string& dir) {
    std::string path = (fs::path(dir) / "manifest.csv").string();
    std::ifstream is(path);
    if (!is) throw Error(Status::Data, "cannot open manifest: " + path);
    std::vector<ManifestRow> rows;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        ManifestRow r;
        ss >> r.id >> r.seed >> r.category;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) ss >> r.gt.rotation(i, j);
        for (int i = 0; i < 3; ++i) ss >> r.gt.translation(i);
        if (!ss) throw Error(Status::Data, "bad manifest row: " + line);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace

void write_pair_file(const PairSample& sample, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw Error(Status::Data, "cannot open pair file for writing: " + path);
    std::fprintf(f, "# ropnet pair 1\n");
    write_section(f, sample.source, "source");
    write_section(f, sample.target, "target");
    std::fclose(f);
}

void read_pair_file(const std::string& path, geom::PointCloud& source,
                    geom::PointCloud& target) {
    std::ifstream is(path);
    if (!is) throw Error(Status::Data, "cannot open pair file: " + path);
    std::string line;
    bool got_source = false, got_target = false;
    while (std::getline(is, line)) {
        if (line.rfind("# source", 0) == 0 || line.rfind("# target", 0) == 0) {
            std::istringstream ss(line.substr(2));
            std::string tag, normtok;
            long count;
            ss >> tag >> count >> normtok;
            bool normals = normtok == "normals=1";
            geom::PointCloud cloud = parse_section(is, count, normals, path);
            if (tag == "source") {
                source = std::move(cloud);
                got_source = true;
            } else {
                target = std::move(cloud);
                got_target = true;
            }
        }
    }
    if (!got_source || !got_target)
        throw Error(Status::Data, "pair file missing source/target section: " + path);
}

void write_dataset(const std::string& dir, const GenConfig& cfg, long num_samples) {
    cfg.validate();
    if (num_samples < 1) throw Error(Status::Usage, "num_samples must be positive");
    fs::create_directories(fs::path(dir) / "pairs");

    RunConfig rc;
    rc.set("n_points", std::to_string(cfg.n_points));
    char buf[64];
    auto setd = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        rc.set(key, buf);
    };
    setd("keep_ratio", cfg.keep_ratio);
    setd("angle_max_deg", cfg.angle_max_deg);
    setd("trans_max", cfg.trans_max);
    setd("noise_sigma", cfg.noise_sigma);
    setd("noise_clip", cfg.noise_clip);
    setd("overlap_d", cfg.overlap_d);
    rc.set("noise", cfg.noise ? "on" : "off");
    rc.set("single_sample", cfg.single_sample ? "on" : "off");
    rc.set("flip_augment", cfg.flip_augment ? "on" : "off");
    rc.set("normals_k", std::to_string(cfg.normals_k));
    rc.set("shape_candidates", std::to_string(cfg.shape_candidates));
    rc.set("seed", std::to_string(cfg.seed));
    std::string cats;
    for (size_t i = 0; i < cfg.categories.size(); ++i)
        cats += (i ? "," : "") + cfg.categories[i];
    rc.set("categories", cats);
    rc.save_file((fs::path(dir) / "config.txt").string());

    std::FILE* mf = std::fopen((fs::path(dir) / "manifest.csv").string().c_str(), "w");
    if (!mf) throw Error(Status::Data, "cannot write manifest in " + dir);
    std::fprintf(mf, "id,seed,category,r00,r01,r02,r10,r11,r12,r20,r21,r22,t0,t1,t2\n");
    for (long i = 0; i < num_samples; ++i) {
        PairSample s = generate_sample(cfg, i);
        write_pair_file(s, pair_path(dir, i));
        std::fprintf(mf, "%ld,%" PRIu64 ",%s", s.id, s.seed, s.category.c_str());
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) std::fprintf(mf, ",%.17g", s.gt.rotation(r, c));
        for (int c = 0; c < 3; ++c) std::fprintf(mf, ",%.17g", s.gt.translation(c));
        std::fprintf(mf, "\n");
    }
    std::fclose(mf);
}

GenConfig make_gen_config(const RunConfig& rc) {
    GenConfig cfg;
    cfg.n_points = rc.get_long("n_points");
    cfg.keep_ratio = rc.get_double("keep_ratio");
    cfg.angle_max_deg = rc.get_double("angle_max_deg");
    cfg.trans_max = rc.get_double("trans_max");
    cfg.noise_sigma = rc.get_double("noise_sigma");
    cfg.noise_clip = rc.get_double("noise_clip");
    cfg.overlap_d = rc.get_double("overlap_d");
    cfg.noise = rc.get_bool("noise");
    cfg.single_sample = rc.get_bool("single_sample");
    cfg.flip_augment = rc.get_bool("flip_augment");
    cfg.normals_k = rc.get_long("normals_k");
    cfg.shape_candidates = rc.get_long("shape_candidates");
    cfg.seed = static_cast<uint64_t>(std::stoull(rc.get("seed")));
    cfg.categories = rc.get_list("categories");
    cfg.validate();
    return cfg;
}

GenConfig load_dataset_config(const std::string& dir) {
    RunConfig rc;
    rc.load_file((fs::path(dir) / "config.txt").string());
    GenConfig cfg;
    cfg.n_points = rc.get_long("n_points");
    cfg.keep_ratio = rc.get_double("keep_ratio");
    cfg.angle_max_deg = rc.get_double("angle_max_deg");
    cfg.trans_max = rc.get_double("trans_max");
    cfg.noise_sigma = rc.get_double("noise_sigma");
    cfg.noise_clip = rc.get_double("noise_clip");
    cfg.overlap_d = rc.get_double("overlap_d");
    cfg.noise = rc.get_bool("noise");
    cfg.single_sample = rc.get_bool("single_sample");
    cfg.flip_augment = rc.get_bool("flip_augment");
    cfg.normals_k = rc.get_long("normals_k");
    cfg.shape_candidates = rc.get_long("shape_candidates");
    cfg.seed = static_cast<uint64_t>(std::stoull(rc.get("seed")));
    cfg.categories = rc.get_list("categories");
    return cfg;
}

std::vector<PairSample> load_dataset(const std::string& dir,
                                     const std::string& category_filter,
                                     double overlap_d_override) {
    GenConfig cfg = load_dataset_config(dir);
    double d = overlap_d_override > 0.0 ? overlap_d_override : cfg.overlap_d;
    std::vector<PairSample> samples;
    for (const ManifestRow& row : load_manifest(dir)) {
        if (!category_filter.empty() && row.category != category_filter) continue;
        PairSample s;
        s.id = row.id;
        s.seed = row.seed;
        s.category = row.category;
        s.gt = row.gt;
        read_pair_file(pair_path(dir, row.id), s.source, s.target);
        s.overlap_source = overlap_labels(s.source.points, s.target.points, s.gt, d);
        s.overlap_target =
            overlap_labels(s.target.points, s.source.points, s.gt.inverse(), d);
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw Error(Status::Data, "no samples loaded from " + dir);
    return samples;
}

}  // namespace ropnet::data
