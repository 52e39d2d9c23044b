#include "fixtures.hpp"

#include "lotlip/sweep.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace lotlip {
namespace {

namespace fs = std::filesystem;

struct SweepFixture : ::testing::Test {
  void SetUp() override {
    dir = fs::temp_directory_path() / ("lotlip_sweep_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    spec.base = testing::tiny_config(1, 1, 8, 4);
    spec.base.train.steps = 6;
    auto records = generate_synthetic_corpus(testing::tiny_corpus_options(20));
    auto split = split_manifest(records, 6);
    train_data = make_dataset(split.train, spec.base.model.image);
    eval_data = make_dataset(split.eval, spec.base.model.image, {}, train_data.class_names);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir;
  SweepSpec spec;
  Dataset train_data, eval_data;
};

TEST_F(SweepFixture, OneRowPerValueAndSeed) {
  spec.axis = SweepAxis::KSubcaptions;
  spec.values = {0, 1};
  spec.repeats = 2;
  const RunConfig base = spec.base;
  const auto table = run_sweep(spec, train_data, eval_data, dir);
  ASSERT_EQ(table.size(), 4u);
  EXPECT_EQ(spec.base, base);
  EXPECT_EQ(table[0].value, 0);
  EXPECT_EQ(table[1].seed, base.train.seed + 1);
  EXPECT_EQ(table[2].value, 1);
  for (const auto& r : table) {
    EXPECT_TRUE(r.ok()) << r.status;
    EXPECT_FALSE(std::isnan(r.metric("long_r1_i2t")));
    EXPECT_FALSE(std::isnan(r.metric("acc1")));
    EXPECT_GT(r.metric("wall_seconds"), 0.0);
  }
  EXPECT_TRUE(fs::exists(dir / "cells.partial.csv"));
}

TEST_F(SweepFixture, FlopsMonotoneAcrossTokenLimit) {
  spec.axis = SweepAxis::TokenLimit;
  spec.values = {8, 12, 16, 24};
  const auto table = run_sweep(spec, train_data, eval_data, dir);
  for (std::size_t i = 1; i < table.size(); ++i) EXPECT_GT(table[i].metric("flops"), table[i - 1].metric("flops"));
}

TEST_F(SweepFixture, FailedCellIsRecordedAndSweepContinues) {
  spec.axis = SweepAxis::MCorners;
  spec.values = {9, 0};
  const auto table = run_sweep(spec, train_data, eval_data, dir);
  ASSERT_EQ(table.size(), 2u);
  EXPECT_FALSE(table[0].ok());
  EXPECT_NE(table[0].status.find("max_corners"), std::string::npos) << table[0].status;
  EXPECT_TRUE(table[1].ok());
  const auto agg = aggregate(table);
  EXPECT_EQ(agg[0].n, 0u);
  EXPECT_EQ(agg[1].n, 1u);
}

TEST_F(SweepFixture, ResumeSkipsFinishedCells) {
  spec.axis = SweepAxis::KSubcaptions;
  spec.values = {1};
  const auto first = run_sweep(spec, train_data, eval_data, dir);
  spec.values = {1, 2};
  const auto second = run_sweep(spec, train_data, eval_data, dir);
  ASSERT_EQ(second.size(), 2u);
  EXPECT_EQ(second[0].metrics, first[0].metrics);
  EXPECT_EQ(load_sweep_csv((dir / "cells.partial.csv").string()).size(), 2u);
}

TEST_F(SweepFixture, CellRerunInIsolationReproducesRow) {
  spec.axis = SweepAxis::KSubcaptions;
  spec.values = {0, 2};
  spec.repeats = 2;
  const auto table = run_sweep(spec, train_data, eval_data, dir, 2);
  const SweepRow again = run_cell(spec, train_data, eval_data, 2, 1);
  const SweepRow& row = table[3];
  ASSERT_EQ(row.value, 2);
  ASSERT_EQ(row.seed, again.seed);
  for (const auto& name : sweep_metric_names()) {
    if (name == "wall_seconds") continue;
    const double a = row.metric(name), b = again.metric(name);
    EXPECT_TRUE(a == b || (std::isnan(a) && std::isnan(b))) << name;
  }
}

TEST(SweepCsv, RoundTripAndStableEmission) {
  SweepTable table;
  for (int i = 0; i < 3; ++i) {
    SweepRow r;
    r.axis = "k_subcaptions";
    r.value = i;
    r.seed = 10 + static_cast<std::uint64_t>(i);
    r.set("long_r1_i2t", 0.1 * i + 1.0 / 3.0);
    r.set("flops", 123456789.0);
    r.set("wall_seconds", 1e-7 * (i + 1));
    table.push_back(r);
  }
  table[1].status = "error: bad, \"quoted\" thing";
  std::stringstream a, b;
  write_cells_csv(a, table);
  write_cells_csv(b, table);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().front(), '#');
  const auto back = read_cells_csv(a);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].status, table[i].status);
    EXPECT_EQ(back[i].seed, table[i].seed);
    for (std::size_t m = 0; m < table[i].metrics.size(); ++m) {
      const double x = table[i].metrics[m], y = back[i].metrics[m];
      EXPECT_TRUE(x == y || (std::isnan(x) && std::isnan(y)));
    }
  }
}

TEST(SweepAggregate, HandComputedMeans) {
  SweepTable table;
  for (double v : {0.2, 0.4, 0.9}) {
    SweepRow r;
    r.axis = "token_limit";
    r.value = 32;
    r.set("long_r1_i2t", v);
    table.push_back(r);
  }
  const auto agg = aggregate(table);
  ASSERT_EQ(agg.size(), 1u);
  EXPECT_EQ(agg[0].n, 3u);
  const auto& names = sweep_metric_names();
  const auto i = static_cast<std::size_t>(std::find(names.begin(), names.end(), "long_r1_i2t") - names.begin());
  EXPECT_NEAR(agg[0].mean[i], 0.5, 1e-15);
  EXPECT_NEAR(agg[0].stddev[i], std::sqrt((0.09 + 0.01 + 0.16) / 2.0), 1e-15);
  EXPECT_TRUE(std::isnan(agg[0].mean[0 == i ? 1 : 0]));
}

TEST(SweepSpec, Validation) {
  SweepSpec s;
  EXPECT_THROW(s.validate(), Error);
  s.values = {-1};
  EXPECT_THROW(s.validate(), Error);
  s.axis = SweepAxis::TokenLimit;
  s.values = {0};
  EXPECT_THROW(s.validate(), Error);
  EXPECT_THROW(parse_sweep_axis("depth"), Error);
}

TEST(SweepEmit, WritesBothFilesIdentically) {
  SweepTable table(1);
  table[0].axis = "m_corners";
  table[0].value = 2;
  table[0].set("acc1", 0.75);
  const auto dir = fs::temp_directory_path() / "lotlip_emit_test";
  emit_plot_data(table, dir);
  std::ifstream c1(dir / "cells.csv"), a1(dir / "aggregate.csv");
  std::string cells((std::istreambuf_iterator<char>(c1)), {}), agg((std::istreambuf_iterator<char>(a1)), {});
  emit_plot_data(table, dir);
  std::ifstream c2(dir / "cells.csv"), a2(dir / "aggregate.csv");
  EXPECT_EQ(cells, std::string((std::istreambuf_iterator<char>(c2)), {}));
  EXPECT_EQ(agg, std::string((std::istreambuf_iterator<char>(a2)), {}));
  EXPECT_NE(agg.find("acc1_mean"), std::string::npos);
  fs::remove_all(dir);
}

// Seed-pinned direction check: one sampled sub-caption beats short-only training
// on long-text retrieval, averaged over three seeds.
TEST(SweepDirection, OneSubcaptionBeatsNone) {
  SyntheticCorpusOptions opt;
  opt.n = 160;
  auto split = split_manifest(generate_synthetic_corpus(opt), 32);
  SweepSpec spec;
  spec.base.train.steps = 300;
  spec.axis = SweepAxis::KSubcaptions;
  spec.values = {0, 1};
  spec.repeats = 3;
  const auto train_data = make_dataset(split.train, spec.base.model.image);
  const auto eval_data = make_dataset(split.eval, spec.base.model.image, {}, train_data.class_names);
  const auto dir = fs::temp_directory_path() / "lotlip_sweep_direction";
  fs::remove_all(dir);
  const auto agg = aggregate(run_sweep(spec, train_data, eval_data, dir));
  fs::remove_all(dir);
  ASSERT_EQ(agg.size(), 2u);
  ASSERT_EQ(agg[0].n, 3u);
  ASSERT_EQ(agg[1].n, 3u);
  const auto& names = sweep_metric_names();
  const auto i = static_cast<std::size_t>(std::find(names.begin(), names.end(), "long_r1_i2t") - names.begin());
  EXPECT_GT(agg[1].mean[i], agg[0].mean[i]) << agg[0].mean[i] << " vs " << agg[1].mean[i];
}

} // namespace
} // namespace lotlip
