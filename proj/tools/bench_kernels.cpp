// Benchmark comparing the serial reference kernels against the OpenMP
// variants, plus the two hot composite operations (backbone forward, graph
// propagation). The parallel kernels must match the reference bitwise.

#include <chrono>
#include <cstdio>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bdlm/corpus.hpp"
#include "bdlm/drs.hpp"
#include "bdlm/kernels.hpp"
#include "bdlm/lm.hpp"
#include "bdlm/rng.hpp"

using namespace bdlm;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Mat random_mat(int64_t r, int64_t c, Rng& rng) {
    Mat m(r, c);
    for (auto& v : m.a) v = rng.normal();
    return m;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("openmp enabled, max threads %d\n", omp_get_max_threads());
#else
    std::printf("openmp disabled (serial build)\n");
#endif

    Rng rng(7);
    {
        const int64_t n = 384;
        Mat a = random_mat(n, n, rng), b = random_mat(n, n, rng);
        Mat c_ref(n, n), c_omp(n, n);
        double t_ref = time_ms([&] { refk::matmul(a, b, c_ref); }, 5);
        double t_omp = time_ms([&] { kern::matmul(a, b, c_omp); }, 5);
        bool same = bitwise_equal(c_ref, c_omp);
        std::printf("matmul %lldx%lld        serial %8.2f ms   omp %8.2f ms   speedup %5.2fx   %s\n",
                    (long long)n, (long long)n, t_ref, t_omp, t_ref / t_omp,
                    same ? "bitwise-equal" : "MISMATCH");
    }
    {
        const int64_t rows = 1, d = 64, v = 50000;
        Mat h = random_mat(rows, d, rng), W = random_mat(v, d, rng);
        Mat l_ref(rows, v), l_omp(rows, v);
        double t_ref = time_ms([&] { refk::matmul_abt(h, W, l_ref); }, 20);
        double t_omp = time_ms([&] { kern::matmul_abt(h, W, l_omp); }, 20);
        std::printf("logits 1x%lld vs %lld  serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n",
                    (long long)d, (long long)v, t_ref, t_omp, t_ref / t_omp,
                    bitwise_equal(l_ref, l_omp) ? "bitwise-equal" : "MISMATCH");
    }
    {
        // graph propagation on a random bipartite graph
        const int64_t n_users = 2000, n_items = 1000, per_user = 30, d = 64;
        std::vector<corpus::Interaction> inter;
        Rng g(11);
        for (int64_t u = 0; u < n_users; ++u)
            for (int64_t k = 0; k < per_user; ++k)
                inter.push_back({u, g.uniform_int(n_items), k, 1});
        corpus::Catalog shape;
        shape.users.resize(n_users);
        shape.items.resize(n_items);
        auto m = corpus::build_matrix(shape, inter);
        auto graph = drs::build_graph(m);
        Mat U = random_mat(n_users, d, rng), I = random_mat(n_items, d, rng);
        Mat Uo, Io;
        double t = time_ms([&] { drs::lgcn_propagate(U, I, graph, 2, Uo, Io); }, 5);
        std::printf("lgcn propagate K=2 (%lld users, %lld items, d=%lld): %8.2f ms\n",
                    (long long)n_users, (long long)n_items, (long long)d, t);
    }
    {
        // small-transformer forward, the inner loop of training and eval
        std::vector<std::string> words;
        for (int i = 0; i < 200; ++i) words.push_back("w" + std::to_string(i));
        auto vocab = vocab::extend_vocab(words, 100, 100);
        lm::Config cfg;
        cfg.n_layers = 4;
        cfg.n_heads = 4;
        cfg.d_model = 64;
        auto params = lm::init_lm(cfg, vocab, 3);
        std::vector<int64_t> ids;
        Rng t(13);
        for (int k = 0; k < 48; ++k) ids.push_back(t.uniform_int(vocab.size()));
        lm::ForwardCache cache;
        double ms = time_ms([&] { lm::forward_ids(ids, params, cache); }, 50);
        std::printf("lm forward (4 layers, d=64, 48 tokens): %8.3f ms\n", ms);
    }
    return 0;
}
