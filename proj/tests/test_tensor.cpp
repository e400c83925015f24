#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ctcn/checkpoint.hpp"
#include "ctcn/gradcheck.hpp"
#include "ctcn/tensor.hpp"
#include "oracles.hpp"

using namespace ctcn;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<double> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Tensor, ElementwiseBasics) {
  EXPECT_EQ(to_vec(relu(Tensor({3}, {-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(to_vec(Tensor({2}, {1, 2}) + Tensor({2}, {3, 4})), (std::vector<double>{4, 6}));
  EXPECT_EQ(exp(Tensor({1}, {0.0})).item(), 1.0);
  EXPECT_EQ(to_vec(Tensor({2}, {1, 2}) * 3.0), (std::vector<double>{3, 6}));
  // NaN must survive relu so that non-finite losses are detectable
  EXPECT_TRUE(std::isnan(relu(Tensor({1}, {std::nan("")})).item()));
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  try {
    (void)(Tensor({2, 3}) + Tensor({3, 2}));
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3, 2]"), std::string::npos) << msg;
  }
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Shape{0, 2}), std::invalid_argument);
  EXPECT_THROW(Tensor({2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, MatmulExamples) {
  const Tensor id({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(to_vec(matmul(id, m)), to_vec(m));
  EXPECT_EQ(matmul(Tensor({1, 2}, {1, 0}), Tensor({2, 1}, {0, 1})).item(), 0.0);
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), std::invalid_argument);
  EXPECT_THROW(matmul(Tensor({6}), Tensor({6, 1})), std::invalid_argument);
}

TEST(Tensor, MatmulMatchesTripleLoop) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_values(12, rng), b = random_values(8, rng);
    const auto got = to_vec(matmul(Tensor({3, 4}, a), Tensor({4, 2}, b)));
    const auto want = oracle::matmul(a, b, 3, 4, 2);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-14);
  }
}

TEST(Tensor, BackwardSimpleCases) {
  Tensor p = Tensor::parameter({3}, {1, 2, 3});
  sum(p).backward();
  EXPECT_EQ(to_vec(Tensor({3}, std::vector<double>(p.grad().begin(), p.grad().end()))),
            (std::vector<double>{1, 1, 1}));

  Tensor q = Tensor::parameter({2}, {1, 2});
  sum(q * q).backward();
  EXPECT_DOUBLE_EQ(q.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(q.grad()[1], 4.0);
}

TEST(Tensor, BackwardRejectsNonScalar) {
  Tensor p = Tensor::parameter({2}, {1, 2});
  EXPECT_THROW((p * 2.0).backward(), std::invalid_argument);
}

TEST(Tensor, GradientsAccumulateAndResetReproduces) {
  std::mt19937_64 rng(3);
  Tensor w = Tensor::parameter({3, 2}, random_values(6, rng));
  const Tensor x({2, 4}, random_values(8, rng));
  auto loss = [&] { return sum(relu(matmul(w, x)) * relu(matmul(w, x))); };
  loss().backward();
  const auto first = std::vector<double>(w.grad().begin(), w.grad().end());
  loss().backward();
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 2 * first[i]);
  w.zero_grad();
  loss().backward();
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(w.grad()[i], first[i]);
}

TEST(Tensor, NoGraphWithoutTrainableInputs) {
  const Tensor a({2}, {1, 2});
  const Tensor b = exp(a) + a;
  EXPECT_FALSE(b.requires_grad());
}

TEST(Tensor, DeterministicForward) {
  auto run = [] {
    std::mt19937_64 rng(11);
    const Tensor a({4, 4}, random_values(16, rng));
    return to_vec(log_softmax_rows(matmul(a, a)));
  };
  EXPECT_EQ(run(), run());
}

TEST(Gradcheck, LinearAndQuadratic) {
  const Tensor point({3}, {1, 2, 3});
  EXPECT_LT(finite_difference_check([](const Tensor& x) { return sum(x); }, point), 1e-9);
  EXPECT_LT(finite_difference_check([](const Tensor& x) { return sum(x * x); }, point), 1e-6);
}

TEST(Gradcheck, NonFiniteNamesCoordinate) {
  const Tensor point({2}, {1.0, 0.0});
  try {
    finite_difference_check([](const Tensor& x) { return sum(log(x)); }, point);
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(Gradcheck, EveryOpOverSeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor p({3, 4}, random_values(12, rng, 0.2, 2.0));
    const Tensor other({4, 3}, random_values(12, rng));
    const std::vector<std::size_t> idx{0, 5, 5, 11, 3, 7};
    auto f = [&](const Tensor& x) {
      Tensor m = matmul(x, other);                                   // [3,3]
      Tensor s = log_softmax_rows(m) + add_leading_bias(m, Tensor({3}, {0.1, -0.2, 0.3}));
      Tensor parts[] = {s, log(x), exp(x * 0.5), -x};
      Tensor flat = concat_flat(parts);
      Tensor g = gather(flat, idx, {2, 3});
      return sum(smooth_l1(g * 3.0)) + sum(minimum(reshape(x, {12}), 1.0)) + sum(relu(flat - Tensor::scalar(0.3)));
    };
    EXPECT_LT(finite_difference_check(f, p), 1e-4) << "seed " << seed;
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(5);
  std::vector<Parameter> params{{"a.weight", Tensor::parameter({2, 3, 1}, random_values(6, rng))},
                                {"b", Tensor::parameter({1}, {std::nextafter(1.0, 2.0)})}};
  const auto path = std::filesystem::temp_directory_path() / "ctcn_ckpt_test.bin";
  save_checkpoint(path, params);
  const auto loaded = load_checkpoint(path);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].name, "a.weight");
  EXPECT_EQ(loaded[0].tensor.shape(), (Shape{2, 3, 1}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(loaded[0].tensor.data()[i], params[0].tensor.data()[i]);
  EXPECT_EQ(encode_checkpoint(loaded), encode_checkpoint(params));
  std::filesystem::remove(path);
}

TEST(Checkpoint, LayoutAndErrors) {
  std::vector<Parameter> params{{"w", Tensor::parameter({1}, {1.0})}};
  const std::string bytes = encode_checkpoint(params);
  ASSERT_EQ(bytes.substr(0, 4), "CTCN");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version, little-endian
  // header 8 + name len 4 + name 1 + rank 4 + extent 4 + one f64
  EXPECT_EQ(bytes.size(), 8u + 4 + 1 + 4 + 4 + 8);
  EXPECT_THROW(decode_checkpoint("XXXX"), std::runtime_error);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);

  std::vector<Parameter> dst{{"w", Tensor::parameter({2}, {0, 0})}};
  EXPECT_THROW(assign_parameters(dst, params), std::runtime_error);
}
