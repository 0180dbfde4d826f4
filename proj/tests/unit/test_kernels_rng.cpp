#include <gtest/gtest.h>

#include <omp.h>

#include <set>

#include "helpers.hpp"
#include "tuckerdiff/kernels.hpp"
#include "tuckerdiff/rng.hpp"

using namespace tucker;

namespace {

class ThreadCap {
 public:
  explicit ThreadCap(int n) { kernels::set_max_threads(n); }
  ~ThreadCap() { kernels::set_max_threads(0); }
};

}  // namespace

TEST(Kernels, ModeProductSerialAndParallelBitwiseEqual) {
  Rng rng(1);
  for (const auto& [left, pd, right, rows] : std::vector<std::array<std::size_t, 4>>{
           {1, 7, 13, 3}, {5, 4, 1, 6}, {3, 8, 9, 2}, {17, 5, 11, 4}}) {
    const DenseTensor x = sample_standard_normal(Shape{left, pd, right}, rng);
    const Matrix m = test::random_matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(pd), rng);
    std::vector<double> ys(left * rows * right), yp(left * rows * right);
    kernels::serial::mode_product({x.data(), left, pd, right, &m, ys});
    for (int threads : {1, 2, 4, 7}) {
      ThreadCap cap(threads);
      std::fill(yp.begin(), yp.end(), -1.0);
      kernels::omp::mode_product({x.data(), left, pd, right, &m, yp});
      EXPECT_EQ(ys, yp) << "threads " << threads;
    }
  }
}

TEST(Kernels, ModeGramSerialAndParallelBitwiseEqual) {
  Rng rng(2);
  const Dataset data = test::random_dataset(Shape{6, 5, 3}, 37, rng);
  for (std::size_t d = 0; d < 3; ++d) {
    const Matrix gs = kernels::serial::mode_gram({data.samples, d});
    Matrix expect = Matrix::Zero(gs.rows(), gs.cols());
    for (const DenseTensor& x : data.samples) {
      const Matrix u = mode_unfold(x, d);
      expect += u * u.transpose();
    }
    EXPECT_LT(test::rel_err(gs, expect), 1e-13);
    for (int threads : {1, 3, 8}) {
      ThreadCap cap(threads);
      EXPECT_TRUE(kernels::omp::mode_gram({data.samples, d}) == gs) << "threads " << threads;
    }
  }
}

TEST(Kernels, ThreadCapRoundTrip) {
  kernels::set_max_threads(3);
  EXPECT_EQ(kernels::max_threads(), 3);
  kernels::set_max_threads(0);
  EXPECT_GE(kernels::max_threads(), 1);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.normal(), b.normal());
    EXPECT_EQ(a.uniform(), b.uniform());
  }
}

TEST(Rng, SubstreamsAreDistinctAndReproducible) {
  const Rng root(11);
  std::set<std::uint64_t> first;
  for (std::uint64_t purpose = 1; purpose <= 10; ++purpose)
    for (std::uint64_t i = 0; i < 50; ++i) {
      Rng s = root.substream(static_cast<Stream>(purpose), i);
      Rng again = root.substream(static_cast<Stream>(purpose), i);
      const std::uint64_t v = s.next_u64();
      EXPECT_EQ(v, again.next_u64());
      first.insert(v);
    }
  EXPECT_EQ(first.size(), 500u);
  Rng other = Rng(12).substream(Stream::kInit, 0);
  EXPECT_NE(other.next_u64(), Rng(11).substream(Stream::kInit, 0).next_u64());
  EXPECT_NE(root.substream(Stream::kInit, 0, 1).next_u64(), root.substream(Stream::kInit, 0, 2).next_u64());
}

TEST(Rng, SubstreamIgnoresParentState) {
  Rng a(3);
  const std::uint64_t before = a.substream(Stream::kSampler, 4).next_u64();
  for (int i = 0; i < 10; ++i) a.normal();
  EXPECT_EQ(a.substream(Stream::kSampler, 4).next_u64(), before);
}

TEST(Rng, UniformRange) {
  Rng r(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform(-2.0, 3.0);
    EXPECT_GE(u, -2.0);
    EXPECT_LT(u, 3.0);
  }
}
