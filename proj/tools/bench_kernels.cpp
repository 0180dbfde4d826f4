#include <benchmark/benchmark.h>

#include "tuckerdiff/kernels.hpp"
#include "tuckerdiff/rng.hpp"

namespace {

using namespace tucker;

struct ProductFixture {
  DenseTensor x;
  Matrix m;
  std::vector<double> y;
  explicit ProductFixture(std::size_t p) {
    Rng rng(7);
    x = sample_standard_normal(Shape{p, p, p}, rng);
    m = Matrix(8, static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal();
    y.assign(p * 8 * p, 0.0);
  }
  kernels::ModeProductArgs args(std::size_t p) {
    return {x.data(), p, p, p, &m, y};
  }
};

template <bool Omp>
void BM_mode_product(benchmark::State& state) {
  const auto p = static_cast<std::size_t>(state.range(0));
  ProductFixture f(p);
  const auto args = f.args(p);
  for (auto _ : state) {
    if constexpr (Omp) kernels::omp::mode_product(args);
    else kernels::serial::mode_product(args);
    benchmark::DoNotOptimize(f.y.data());
  }
}

template <bool Omp>
void BM_mode_gram(benchmark::State& state) {
  const auto p = static_cast<std::size_t>(state.range(0));
  Rng rng(11);
  std::vector<DenseTensor> samples;
  for (int i = 0; i < 256; ++i) samples.push_back(sample_standard_normal(Shape{p, p}, rng));
  const kernels::ModeGramArgs args{samples, 0};
  for (auto _ : state) {
    Matrix g = Omp ? kernels::omp::mode_gram(args) : kernels::serial::mode_gram(args);
    benchmark::DoNotOptimize(g.data());
  }
}

BENCHMARK(BM_mode_product<false>)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_mode_product<true>)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_mode_gram<false>)->Arg(32)->Arg(64);
BENCHMARK(BM_mode_gram<true>)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
