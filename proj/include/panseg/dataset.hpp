#ifndef PANSEG_DATASET_HPP
#define PANSEG_DATASET_HPP

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "panseg/augment.hpp"
#include "panseg/image_io.hpp"
#include "panseg/phantom.hpp"

namespace panseg {

struct SampleInfo {
    std::string id;
    std::string split = "-";      // free-form tag, "-" when unassigned
    AugTag aug = AugTag::none;
    uint64_t seed = 0;            // substream key the sample was generated/deformed with
};

struct Dataset {
    std::string root;
    std::vector<SampleInfo> samples;

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(samples.size());
        for (const auto& s : samples) out.push_back(s.id);
        return out;
    }
};

inline std::string image_path(const std::string& root, const std::string& id) {
    return root + "/images/" + id + ".pgm";
}

inline std::string mask_path(const std::string& root, const std::string& id) {
    return root + "/masks/" + id + ".pgm";
}

inline std::string manifest_path(const std::string& root) { return root + "/manifest.tsv"; }

inline void write_manifest(const Dataset& ds) {
    std::ostringstream out;
    out << "id\tsplit\taug\tseed\n";
    for (const auto& s : ds.samples)
        out << s.id << '\t' << s.split << '\t' << aug_name(s.aug) << '\t' << s.seed << '\n';
    const std::string text = out.str();
    std::ofstream f(manifest_path(ds.root), std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorKind::io, "cannot write ", manifest_path(ds.root));
    f.write(text.data(), std::streamsize(text.size()));
    require(f.good(), ErrorKind::io, "short write to ", manifest_path(ds.root));
}

inline AugTag parse_aug(const std::string& s) {
    for (AugTag t : {AugTag::none, AugTag::hflip, AugTag::vflip, AugTag::rot180, AugTag::rot_p30,
                     AugTag::rot_m30, AugTag::elastic})
        if (s == aug_name(t)) return t;
    fail(ErrorKind::format, "unknown augmentation tag \"", s, "\" in manifest");
}

inline Dataset load_dataset(const std::string& root) {
    std::ifstream f(manifest_path(root));
    require(f.good(), ErrorKind::io, "cannot open ", manifest_path(root));
    Dataset ds{root, {}};
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        size_t start = 0;
        while (true) {
            const size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (first) {
            first = false;
            require(cols.size() == 4 && cols[0] == "id", ErrorKind::format, manifest_path(root),
                    ": expected header \"id\\tsplit\\taug\\tseed\"");
            continue;
        }
        require(cols.size() == 4, ErrorKind::format, manifest_path(root), ": bad row \"", line,
                "\"");
        SampleInfo s;
        s.id = cols[0];
        s.split = cols[1];
        s.aug = parse_aug(cols[2]);
        s.seed = std::stoull(cols[3]);
        ds.samples.push_back(std::move(s));
    }
    require(!ds.samples.empty(), ErrorKind::format, manifest_path(root), ": empty manifest");
    return ds;
}

template <class S = float>
struct LoadedSample {
    std::string id;
    Tensor<S> image;  // [H,W] in [0,1]
    BinaryMask mask;
};

template <class S = float>
LoadedSample<S> load_sample(const std::string& root, const SampleInfo& info) {
    LoadedSample<S> s{info.id, load_image<S>(image_path(root, info.id)),
                      load_mask(mask_path(root, info.id))};
    require(s.image.dim(0) == s.mask.h() && s.image.dim(1) == s.mask.w(),
            ErrorKind::shape_mismatch, info.id, ": image ", shape_str(s.image.shape()),
            " vs mask ", s.mask.h(), "x", s.mask.w());
    return s;
}

/// Generate `count` phantoms under `root`. Sample i draws from substream i of
/// the config seed; output bytes depend only on (config, count).
inline Dataset synth_dataset(const std::string& root, const PhantomConfig& cfg, int count) {
    require(count >= 1, ErrorKind::invalid_argument, "synth_dataset: count must be >= 1");
    std::filesystem::create_directories(root + "/images");
    std::filesystem::create_directories(root + "/masks");
    Rng base(cfg.seed);
    Dataset ds{root, {}};
    for (int i = 0; i < count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "phantom_%03d", i);
        const Phantom ph = synth_phantom(cfg, base.fork(uint64_t(i)));
        write_pgm(image_path(root, id), ph.image);
        save_mask(mask_path(root, id), ph.mask);
        ds.samples.push_back(SampleInfo{id, "-", AugTag::none, uint64_t(i)});
    }
    write_manifest(ds);
    return ds;
}

/// Write the six-transform augmentation of every input sample under a new
/// root. Elastic fields for sample i come from substream i of `elastic_seed`.
/// `include_originals` additionally copies the untransformed pairs through.
inline Dataset augment_dataset(const Dataset& in, const std::string& out_root,
                               const ElasticConfig& cfg, uint64_t elastic_seed,
                               bool include_originals = false) {
    std::filesystem::create_directories(out_root + "/images");
    std::filesystem::create_directories(out_root + "/masks");
    Rng base(elastic_seed);
    Dataset out{out_root, {}};
    for (size_t i = 0; i < in.samples.size(); ++i) {
        const SampleInfo& info = in.samples[i];
        const LoadedSample<float> s = load_sample<float>(in.root, info);
        if (include_originals) {
            const std::string id = info.id + "_none";
            save_image(image_path(out_root, id), s.image);
            save_mask(mask_path(out_root, id), s.mask);
            out.samples.push_back(SampleInfo{id, info.split, AugTag::none, info.seed});
        }
        const auto variants = augment_pair(s.image, s.mask, cfg, base.fork(uint64_t(i)));
        for (const auto& v : variants) {
            const std::string id = info.id + "_" + aug_suffix(v.tag);
            save_image(image_path(out_root, id), v.image);
            save_mask(mask_path(out_root, id), v.mask);
            out.samples.push_back(SampleInfo{id, info.split, v.tag, uint64_t(i)});
        }
    }
    write_manifest(out);
    return out;
}

// ---- fold splitting -----------------------------------------------------------

struct Fold {
    std::vector<std::string> test, train;
};

/// Seeded shuffle then contiguous partition into k near-equal test folds; the
/// train list of each fold is the complement, in shuffled order.
inline std::vector<Fold> kfold(const std::vector<std::string>& ids, int k, uint64_t seed) {
    require(k >= 2, ErrorKind::invalid_argument, "kfold: k must be >= 2, got ", k);
    require(int(ids.size()) >= k, ErrorKind::invalid_argument, "kfold: k=", k, " exceeds ",
            ids.size(), " ids");
    std::vector<std::string> shuffled = ids;
    Rng r(seed);
    r.shuffle(shuffled);
    const int n = int(shuffled.size());
    std::vector<Fold> folds(static_cast<size_t>(k));
    for (int f = 0; f < k; ++f) {
        const int lo = f * n / k, hi = (f + 1) * n / k;
        for (int i = 0; i < n; ++i) {
            if (i >= lo && i < hi) folds[size_t(f)].test.push_back(shuffled[size_t(i)]);
            else folds[size_t(f)].train.push_back(shuffled[size_t(i)]);
        }
    }
    return folds;
}

}  // namespace panseg

#endif  // PANSEG_DATASET_HPP
