#include "voxseg/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "voxseg/rng.hpp"

namespace voxseg {

using nlohmann::json;

std::string RunConfig::to_json() const {
    json j;
    j["network"] = json::parse(network.to_json());
    j["optim"] = {{"base_lr", optim.base_lr},
                  {"momentum", optim.momentum},
                  {"decay_power", optim.decay_power},
                  {"weight_decay", optim.weight_decay},
                  {"batch_size", optim.batch_size},
                  {"total_iters", optim.total_iters}};
    j["fine_margin"] = fine_margin;
    j["n_coarse"] = n_coarse;
    j["n_fine"] = n_fine;
    j["fusion"] = fusion_name(fusion);
    j["filter_fraction"] = filter_fraction;
    j["connectivity"] = connectivity;
    j["mask_crop_input"] = mask_crop_input;
    j["seed"] = seed;
    j["log_interval"] = log_interval;
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad run config JSON: ") + e.what());
    }
    RunConfig c;
    for (auto& [key, value] : j.items()) {
        if (key == "network") {
            c.network = NetworkConfig::from_json(value.dump());
        } else if (key == "optim") {
            for (auto& [ok, ov] : value.items()) {
                if (ok == "base_lr") c.optim.base_lr = ov.get<double>();
                else if (ok == "momentum") c.optim.momentum = ov.get<double>();
                else if (ok == "decay_power") c.optim.decay_power = ov.get<double>();
                else if (ok == "weight_decay") c.optim.weight_decay = ov.get<double>();
                else if (ok == "batch_size") c.optim.batch_size = ov.get<int64_t>();
                else if (ok == "total_iters") c.optim.total_iters = ov.get<int64_t>();
                else throw std::invalid_argument("unknown optim config key: " + ok);
            }
        } else if (key == "fine_margin") {
            c.fine_margin = value.get<int64_t>();
        } else if (key == "n_coarse") {
            c.n_coarse = value.get<int64_t>();
        } else if (key == "n_fine") {
            c.n_fine = value.get<int64_t>();
        } else if (key == "fusion") {
            c.fusion = fusion_from(value.get<std::string>());
        } else if (key == "filter_fraction") {
            c.filter_fraction = value.get<double>();
        } else if (key == "connectivity") {
            c.connectivity = value.get<int>();
        } else if (key == "mask_crop_input") {
            c.mask_crop_input = value.get<bool>();
        } else if (key == "seed") {
            c.seed = value.get<uint64_t>();
        } else if (key == "log_interval") {
            c.log_interval = value.get<int64_t>();
        } else {
            throw std::invalid_argument("unknown run config key: " + key);
        }
    }
    if (c.connectivity != 6 && c.connectivity != 26)
        throw std::invalid_argument("connectivity must be 6 or 26");
    if (c.filter_fraction < 0.0 || c.filter_fraction > 1.0)
        throw std::invalid_argument("filter_fraction must be in [0, 1]");
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void RunConfig::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config: " + path);
    out << to_json() << "\n";
}

std::string SplitManifest::to_json() const {
    json j;
    j["seed"] = seed;
    j["folds"] = folds;
    return j.dump(2);
}

SplitManifest SplitManifest::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open split manifest: " + path);
    json j;
    in >> j;
    SplitManifest m;
    m.seed = j.at("seed").get<uint64_t>();
    m.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
    return m;
}

SplitManifest make_split(std::vector<std::string> case_ids, uint64_t seed, int folds) {
    if (folds < 1) throw std::invalid_argument("folds must be >= 1");
    std::sort(case_ids.begin(), case_ids.end());
    Rng rng(seed);
    // Fisher-Yates
    for (size_t i = case_ids.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.next_below(i));
        std::swap(case_ids[i - 1], case_ids[j]);
    }
    SplitManifest m;
    m.seed = seed;
    m.folds.resize(static_cast<size_t>(folds));
    const size_t n = case_ids.size();
    size_t start = 0;
    for (int f = 0; f < folds; ++f) {
        // first (n % folds) folds get the extra case
        const size_t len = n / folds + (static_cast<size_t>(f) < n % folds ? 1 : 0);
        for (size_t i = 0; i < len; ++i) m.folds[f].push_back(case_ids[start + i]);
        start += len;
    }
    return m;
}

} // namespace voxseg
