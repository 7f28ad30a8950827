#include "dtcl/data.hpp"
#include "dtcl/experiment.hpp"
#include "dtcl/trainer.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

using dtcl::Rng;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dtcl_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("synthetic views equal the centers without noise") {
  Rng rng(1);
  const dtcl::SyntheticSpec spec{3, 5, 0.0, 30, 9};
  Rng c(2);
  const Eigen::MatrixXd centers = c.unit_vectors(5, 3);
  const auto d = dtcl::generate_synthetic_pairs(spec, centers, rng);
  REQUIRE(d.train.size() == 30);
  REQUIRE(d.test.size() == 9);
  for (Eigen::Index i = 0; i < 30; ++i) {
    const int y = d.train.labels[static_cast<std::size_t>(i)];
    CHECK(d.train.view1.col(i) == centers.col(y));
    CHECK(d.train.view2.col(i) == centers.col(y));
  }
  CHECK_THROWS(dtcl::generate_synthetic_pairs(spec, centers.leftCols(2), rng));
}

TEST_CASE("synthetic generation is deterministic and noise has the stated norm") {
  const dtcl::SyntheticSpec spec{4, 400, 2.0, 200, 50};
  Rng a(3), b(3);
  const auto x = dtcl::generate_synthetic_pairs(spec, a);
  const auto y = dtcl::generate_synthetic_pairs(spec, b);
  CHECK(x.train.view1 == y.train.view1);
  CHECK(x.test.labels == y.test.labels);
  const Eigen::MatrixXd diff = x.train.view1 - x.train.view2;
  // The difference of two views has norm about sqrt(2) * noise_scale.
  CHECK(diff.colwise().norm().mean() == doctest::Approx(std::sqrt(2.0) * 2.0).epsilon(0.02));
}

TEST_CASE("antipodal two-class data is linearly separable by the probe") {
  const dtcl::SyntheticSpec spec{2, 8, 0.3, 400, 200};
  Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(8, 2);
  centers(0, 0) = 1.0;
  centers(0, 1) = -1.0;
  Rng rng(4);
  const auto d = dtcl::generate_synthetic_pairs(spec, centers, rng);
  dtcl::LinearClassifier clf = dtcl::LinearClassifier::zeros(2, 8);
  for (int s = 0; s < 100; ++s) dtcl::linear_eval_step(clf, d.train.view1, d.train.labels, 0.5, {});
  CHECK(dtcl::top1_accuracy(clf, d.test.view1, d.test.labels) >= 0.99);
}

TEST_CASE("cifar loader reads crafted records") {
  const std::size_t rec10 = dtcl::cifar_record_size(dtcl::CifarVariant::kCifar10);
  const std::size_t rec100 = dtcl::cifar_record_size(dtcl::CifarVariant::kCifar100);
  CHECK(rec10 == 3073);
  CHECK(rec100 == 3074);

  std::vector<unsigned char> bytes(2 * rec10, 0);
  bytes[0] = 7;
  bytes[1] = 255;
  bytes[rec10] = 2;
  bytes[rec10 + 3072] = 51;
  const fs::path p = scratch("two.bin");
  write_bytes(p, bytes);
  const auto img = dtcl::load_cifar_binary(p, dtcl::CifarVariant::kCifar10);
  REQUIRE(img.labels.size() == 2);
  CHECK(img.labels[0] == 7);
  CHECK(img.labels[1] == 2);
  CHECK(img.pixels(0, 0) == 1.0);
  CHECK(img.pixels(1, 0) == 0.0);
  CHECK(img.pixels(3071, 1) == doctest::Approx(51.0 / 255.0));
  CHECK(img.num_classes == 10);

  std::vector<unsigned char> fine(rec100, 0);
  fine[0] = 3;
  fine[1] = 88;
  const fs::path q = scratch("fine.bin");
  write_bytes(q, fine);
  const auto img100 = dtcl::load_cifar_binary(q, dtcl::CifarVariant::kCifar100);
  CHECK(img100.labels[0] == 88);
  CHECK(img100.num_classes == 100);
}

TEST_CASE("cifar loader rejects empty, truncated and out-of-range files") {
  const fs::path empty = scratch("empty.bin");
  write_bytes(empty, {});
  CHECK_THROWS(dtcl::load_cifar_binary(empty, dtcl::CifarVariant::kCifar10));

  const fs::path odd = scratch("odd.bin");
  write_bytes(odd, std::vector<unsigned char>(3073 + 5, 0));
  try {
    dtcl::load_cifar_binary(odd, dtcl::CifarVariant::kCifar10);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("3073") != std::string::npos);
  }

  std::vector<unsigned char> bad(3073, 0);
  bad[0] = 12;
  const fs::path lab = scratch("label.bin");
  write_bytes(lab, bad);
  CHECK_THROWS(dtcl::load_cifar_binary(lab, dtcl::CifarVariant::kCifar10));
  CHECK_THROWS(dtcl::load_cifar_binary(scratch("missing.bin"), dtcl::CifarVariant::kCifar10));
}

TEST_CASE("noisy views keep labels and perturb pixels") {
  dtcl::LabeledImages img{Eigen::MatrixXd::Constant(3072, 4, 0.5), {0, 1, 2, 3}, 10};
  Rng rng(5);
  const auto d = dtcl::make_noisy_views(img, 1.0, rng);
  CHECK(d.labels == img.labels);
  CHECK(d.view1 != d.view2);
  CHECK((d.view1 - img.pixels).colwise().norm().mean() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("label noise flips the requested fraction") {
  Rng rng(6);
  std::vector<int> labels(20000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  CHECK(dtcl::inject_label_noise(labels, 10, {dtcl::LabelNoiseKind::kSymmetric, 0.0}, rng) == labels);
  CHECK_THROWS(dtcl::inject_label_noise(labels, 10, {dtcl::LabelNoiseKind::kSymmetric, 1.0}, rng));
  CHECK_THROWS(dtcl::inject_label_noise(labels, 1, {dtcl::LabelNoiseKind::kSymmetric, 0.1}, rng));

  for (const auto kind : {dtcl::LabelNoiseKind::kSymmetric, dtcl::LabelNoiseKind::kAsymmetric}) {
    const auto noisy = dtcl::inject_label_noise(labels, 10, {kind, 0.4}, rng);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (noisy[i] != labels[i]) {
        ++flipped;
        if (kind == dtcl::LabelNoiseKind::kAsymmetric) CHECK(noisy[i] == (labels[i] + 1) % 10);
      }
      CHECK(noisy[i] >= 0);
      CHECK(noisy[i] < 10);
    }
    CHECK(static_cast<double>(flipped) / labels.size() == doctest::Approx(0.4).epsilon(0.0375));
  }
  CHECK(dtcl::parse_label_noise_kind("asymmetric") == dtcl::LabelNoiseKind::kAsymmetric);
  CHECK_THROWS(dtcl::parse_label_noise_kind("pair"));
}

TEST_CASE("experiment config survives a JSON round trip") {
  dtcl::ExperimentConfig cfg;
  cfg.mode = dtcl::Mode::kEntropySweep;
  cfg.train.framework.framework = dtcl::Framework::kMocoV2;
  cfg.train.framework.temps = {0.07, 0.7};
  cfg.train.framework.sampling = dtcl::SamplingStrategy::kNewest;
  cfg.train.framework.sample_count = 128;
  cfg.train.framework.shared_dictionary = true;
  cfg.train.schedule.total_epochs = 7;
  cfg.dataset.label_noise = dtcl::LabelNoiseSpec{dtcl::LabelNoiseKind::kAsymmetric, 0.2};
  cfg.seeds = {3, 5};
  cfg.sweep.sweep.dict_sizes = {8, 16};
  cfg.out = "elsewhere";
  const auto j = dtcl::to_json(cfg);
  const auto back = dtcl::experiment_from_json(nlohmann::json::parse(j.dump()));
  CHECK(dtcl::to_json(back).dump() == j.dump());
  CHECK(back.train.framework.temps.tau_beta == 0.7);
  CHECK(back.dataset.label_noise->ratio == 0.2);

  nlohmann::json broken = nlohmann::json::parse(j.dump());
  broken["framework"]["name"] = "nope";
  CHECK_THROWS(dtcl::experiment_from_json(broken));
}
