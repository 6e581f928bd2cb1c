#include <set>

#include "doctest.h"
#include "voxseg/run_config.hpp"

using namespace voxseg;

TEST_CASE("run config serializes losslessly") {
    RunConfig c;
    c.network = NetworkConfig::variant("FResDSN");
    c.network.stage_channels = {4, 8, 16, 32};
    c.optim.total_iters = 1234;
    c.optim.batch_size = 4;
    c.n_coarse = 5;
    c.n_fine = 11;
    c.fine_margin = 6;
    c.fusion = FusionMode::vote;
    c.filter_fraction = 0.05;
    c.connectivity = 6;
    c.mask_crop_input = true;
    c.seed = 99;
    RunConfig back = RunConfig::from_json(c.to_json());
    CHECK(back == c);
}

TEST_CASE("unknown keys are rejected at both levels") {
    CHECK_THROWS(RunConfig::from_json(R"({"unknown_knob": 1})"));
    CHECK_THROWS(RunConfig::from_json(R"({"optim": {"lr_warmup": 5}})"));
    CHECK_THROWS(RunConfig::from_json(R"({"network": {"dropout": 0.5}})"));
    CHECK_THROWS(RunConfig::from_json(R"({"connectivity": 18})"));
    CHECK_THROWS(RunConfig::from_json(R"({"filter_fraction": 1.5})"));
}

TEST_CASE("4-fold split partitions the cases with near-equal sizes") {
    std::vector<std::string> ids;
    for (int i = 0; i < 82; ++i) ids.push_back("case" + std::to_string(i));
    SplitManifest m = make_split(ids, 7);
    REQUIRE(m.folds.size() == 4);
    std::multiset<std::string> all;
    for (const auto& f : m.folds)
        for (const auto& id : f) all.insert(id);
    CHECK(all.size() == ids.size());
    CHECK(std::set<std::string>(all.begin(), all.end()).size() == ids.size());
    for (const auto& f : m.folds) {
        CHECK(f.size() >= 20);
        CHECK(f.size() <= 21);
    }
    // deterministic per seed, different across seeds
    SplitManifest m2 = make_split(ids, 7);
    CHECK(m2.folds == m.folds);
    SplitManifest m3 = make_split(ids, 8);
    CHECK(m3.folds != m.folds);
}
