#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "sharplab/data.hpp"
#include "sharplab/error.hpp"

using namespace sharplab;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sharplab_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("lt_counts closed form") {
    const auto c = lt_counts(1000, 10, 100.0);
    CHECK(c.front() == 1000);
    CHECK(c.back() == 10);
    CHECK(c[4] == static_cast<std::size_t>(std::llround(1000.0 * std::pow(100.0, -4.0 / 9.0))));
    CHECK(c[4] == 129);
    for (std::size_t v : lt_counts(300, 5, 1.0)) CHECK(v == 300);
  }

  TEST_CASE("lt_counts monotone with bounded rounding slack") {
    for (double ir : {1.0, 2.5, 10.0, 50.0, 100.0, 256.0}) {
      for (std::size_t c : {2u, 3u, 10u, 17u}) {
        const auto counts = lt_counts(500, c, ir);
        for (std::size_t i = 1; i < counts.size(); ++i) CHECK(counts[i] <= counts[i - 1]);
        const double nc = static_cast<double>(counts.back());
        const double ratio = static_cast<double>(counts.front()) / nc;
        CHECK(ratio >= ir * (1.0 - 1.0 / nc) - 1e-12);
        CHECK(ratio <= ir * (1.0 + 1.0 / nc) + 1e-12);
      }
    }
  }

  TEST_CASE("synthetic splits") {
    DatasetConfig cfg{.num_classes = 5, .input_dim = 8, .n_max = 200, .imbalance_ratio = 20.0,
                      .mean_separation = 3.0, .noise_scale = 1.0, .test_per_class = 7, .seed = 42};
    const auto a = synth_gaussian_lt(cfg);
    const auto b = synth_gaussian_lt(cfg);
    CHECK(a.train.features == b.train.features);
    CHECK(a.train.labels == b.train.labels);
    CHECK(a.test.features == b.test.features);
    CHECK(a.priors.counts() == lt_counts(200, 5, 20.0));
    double total = 0.0;
    for (double r : a.priors.ratios()) total += r;
    CHECK(std::abs(total - 1.0) <= 1e-12);
    for (std::size_t y = 0; y < 5; ++y) {
      CHECK(a.priors.ratio(y) == static_cast<double>(a.priors.counts()[y]) / static_cast<double>(a.train.size()));
      CHECK(std::count(a.test.labels.begin(), a.test.labels.end(), static_cast<int>(y)) == 7);
      for (std::size_t z = 0; z < y; ++z) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < 8; ++j) {
          const double d = a.class_means.at(y, j) - a.class_means.at(z, j);
          d2 += d * d;
        }
        CHECK(std::sqrt(d2) >= 3.0);
      }
    }
    cfg.seed = 43;
    CHECK_FALSE(synth_gaussian_lt(cfg).train.features == a.train.features);
    CHECK_THROWS_AS((DatasetConfig{.num_classes = 5, .n_max = 4}.validate()), Error);
    CHECK_THROWS_AS((DatasetConfig{.imbalance_ratio = 0.5}.validate()), Error);
  }

  TEST_CASE("noise-free data is separable by 1-NN") {
    DatasetConfig cfg{.num_classes = 4, .input_dim = 3, .n_max = 20, .imbalance_ratio = 10.0, .noise_scale = 0.0,
                      .test_per_class = 5, .seed = 1};
    const auto s = synth_gaussian_lt(cfg);
    std::vector<int> pred;
    for (std::size_t i = 0; i < s.test.size(); ++i) {
      double best = INFINITY;
      int label = -1;
      for (std::size_t j = 0; j < s.train.size(); ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
          const double diff = s.test.features.at(i, k) - s.train.features.at(j, k);
          d += diff * diff;
        }
        if (d < best) best = d, label = s.train.labels[j];
      }
      pred.push_back(label);
    }
    const auto part = partition_classes(s.priors, 100, 20);
    CHECK(balanced_accuracy(pred, s.test.labels, part, 4).overall == 1.0);
  }

  TEST_CASE("partition thresholds") {
    const auto p = partition_classes(ClassPriors::from_counts({1000, 50, 10}), 100, 20);
    CHECK(p.head == std::vector<std::size_t>{0});
    CHECK(p.medium == std::vector<std::size_t>{1});
    CHECK(p.tail == std::vector<std::size_t>{2});
    const auto edges = partition_classes(ClassPriors::from_counts({100, 20}), 100, 20);
    CHECK(edges.medium == std::vector<std::size_t>{0, 1});
    const auto all_head = partition_classes(ClassPriors::from_counts({500, 300}), 100, 20);
    CHECK(all_head.head.size() == 2);
    CHECK(all_head.medium.empty());
    CHECK(all_head.tail.empty());
    CHECK(partition_classes(ClassPriors::from_counts({5, 1}), 0, 0).head.size() == 2);
    CHECK_THROWS_AS(partition_classes(ClassPriors::from_counts({5, 1}), 10, 20), Error);
  }

  TEST_CASE("balanced accuracy") {
    const auto part2 = partition_classes(ClassPriors::from_counts({10, 10}), 100, 20);
    const std::vector<int> labels{0, 0, 1, 1};
    CHECK(balanced_accuracy(std::vector<int>{0, 0, 1, 0}, labels, part2, 2).overall == 0.75);
    const auto perfect = balanced_accuracy(labels, labels, part2, 2);
    CHECK(perfect.overall == 1.0);
    CHECK(perfect.tail == 1.0);

    ClassPartition p3{.head = {0}, .medium = {1}, .tail = {2}};
    std::vector<int> y, pred;
    const int correct[3] = {9, 6, 3};
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 10; ++i) {
        y.push_back(c);
        pred.push_back(i < correct[c] ? c : (c + 1) % 3);
      }
    }
    const auto r = balanced_accuracy(pred, y, p3, 3);
    CHECK(r.overall == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(*r.head == doctest::Approx(0.9));
    CHECK(*r.medium == doctest::Approx(0.6));
    CHECK(*r.tail == doctest::Approx(0.3));

    // Duplicating every sample of one class leaves the result unchanged.
    auto y2 = y, pred2 = pred;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == 1) y2.push_back(y[i]), pred2.push_back(pred[i]);
    }
    CHECK(balanced_accuracy(pred2, y2, p3, 3).overall == doctest::Approx(r.overall).epsilon(1e-15));

    const auto missing = balanced_accuracy(std::vector<int>{0, 0}, std::vector<int>{0, 0}, p3, 3);
    CHECK(missing.excluded_classes == std::vector<std::size_t>{1, 2});
    CHECK(std::isnan(missing.per_class[1]));
    CHECK(missing.overall == 1.0);
    CHECK_THROWS_AS(balanced_accuracy(std::vector<int>{}, std::vector<int>{}, p3, 3), Error);
  }

  TEST_CASE("csv loading") {
    const auto path = scratch("three.csv");
    write_text(path, "f1,f2,label\n0.5,1.0,0\n-1,2,1\n3,3e-1,0\n");
    const auto d = load_csv(path.string());
    CHECK(d.size() == 3);
    CHECK(d.features.at(2, 1) == 0.3);
    const auto pri = d.priors();
    CHECK(pri.ratio(0) == doctest::Approx(2.0 / 3.0));
    CHECK(pri.ratio(1) == doctest::Approx(1.0 / 3.0));

    const auto named = scratch("named.csv");
    write_text(named, "label,a\n1,0.1\n0,0.2\n");
    const auto n = load_csv(named.string(), CsvOptions{.label_column = "label"});
    CHECK(n.labels == std::vector<int>{1, 0});
    CHECK(n.features.at(1, 0) == 0.2);

    const auto bad = scratch("bad.csv");
    write_text(bad, "1,2,0\n1,x,1\n");
    try {
      (void)load_csv(bad.string());
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kParse);
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
    const auto range = scratch("range.csv");
    write_text(range, "1,2,0\n1,2,5\n");
    CHECK_THROWS_AS(load_csv(range.string(), CsvOptions{.num_classes = 3}), Error);
    write_text(range, "1,2,-1\n");
    CHECK_THROWS_AS(load_csv(range.string()), Error);
    try {
      (void)load_csv(scratch("absent.csv").string());
      FAIL("expected not-found");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNotFound);
    }
  }

  TEST_CASE("csv round trip through write_csv") {
    DatasetConfig cfg{.num_classes = 3, .input_dim = 2, .n_max = 10, .imbalance_ratio = 2.0, .seed = 5};
    const auto s = synth_gaussian_lt(cfg);
    const auto path = scratch("roundtrip.csv");
    write_csv(s.train, path.string());
    const auto back = load_csv(path.string());
    CHECK(back.features == s.train.features);
    CHECK(back.labels == s.train.labels);
  }

  TEST_CASE("idx loading") {
    const auto images = scratch("img.idx");
    const auto labels = scratch("lbl.idx");
    write_bytes(images, {0, 0, 0x08, 3, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0, 2, 10, 20, 30, 40, 50, 255});
    write_bytes(labels, {0, 0, 0x08, 1, 0, 0, 0, 3, 1, 0, 1});
    const auto d = load_idx(images.string(), labels.string());
    CHECK(d.size() == 3);
    CHECK(d.features.shape() == Shape{3, 2});
    CHECK(d.features.at(2, 1) == 255.0);
    CHECK(d.labels == std::vector<int>{1, 0, 1});
    write_bytes(labels, {0, 0, 0x08, 1, 0, 0, 0, 2, 1, 0});
    CHECK_THROWS_AS(load_idx(images.string(), labels.string()), Error);
    write_bytes(images, {1, 2, 3});
    CHECK_THROWS_AS(load_idx(images.string(), labels.string()), Error);
  }

  TEST_CASE("long-tailed subsampling of a balanced file") {
    Dataset d;
    d.num_classes = 2;
    d.features = Tensor({200, 1});
    for (std::size_t i = 0; i < 200; ++i) {
      d.labels.push_back(i < 100 ? 0 : 1);
      d.features.at(i, 0) = static_cast<double>(i);
    }
    const auto lt = subsample_long_tailed(d, 2.0, 3);
    CHECK(lt.priors().counts() == std::vector<std::size_t>{100, 50});
    const auto again = subsample_long_tailed(d, 2.0, 3);
    CHECK(again.features == lt.features);
    const auto [rest, test] = split_balanced(d, 10, 1);
    CHECK(test.priors().counts() == std::vector<std::size_t>{10, 10});
    CHECK(rest.size() == 180);
  }

  TEST_CASE("epoch batches are a seeded partition") {
    const auto a = epoch_batches(103, 10, 7, 2);
    CHECK(a == epoch_batches(103, 10, 7, 2));
    CHECK_FALSE(a == epoch_batches(103, 10, 7, 3));
    CHECK(a.size() == 11);
    CHECK(a.back().size() == 3);
    std::set<std::size_t> seen;
    for (const auto& b : a) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 103);
  }
}
