#include "cmr/encoders.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

using namespace cmr;
using namespace cmr::testing;

TEST_CASE("query encoder with zeroed weights emits the normalized output bias") {
    HyperParams hp = tiny_hyper();
    ModelParams<double> p = init_params<double>(hp, 1);
    p.query.w1.setZero();
    p.query.b1.setZero();
    p.query.w2.setZero();
    SplitMix64 rng(3);
    p.query.b2 = rand_vector<double>(rng, hp.embed_dim);

    const VectorD x = rand_vector<double>(rng, hp.text_dim);
    const VectorD q = encode_query(p, x);
    const VectorD expected = p.query.b2 / p.query.b2.norm();
    CHECK((q - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(q.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("query encoder falls back to a fixed direction on zero norm") {
    HyperParams hp = tiny_hyper();
    ModelParams<double> p = init_params<double>(hp, 1);
    p.query.w1.setZero();
    p.query.b1.setZero();
    p.query.w2.setZero();
    p.query.b2.setZero();

    QueryCache<double> cache;
    const VectorD q = encode_query(p, VectorD(VectorD::Ones(hp.text_dim)), &cache);
    CHECK(cache.degenerate);
    CHECK(q[0] == 1.0);
    CHECK(q.tail(hp.embed_dim - 1).cwiseAbs().maxCoeff() == 0.0);

    // Degenerate rows are constants; backward must leave gradients at zero.
    ModelParams<double> g = zeros_like(p);
    encode_query_backward(p, cache, VectorD(VectorD::Ones(hp.embed_dim)), g);
    for_each_tensor(g.query, "query", [](const std::string&, const auto& t) {
        CHECK(t.cwiseAbs().maxCoeff() == 0.0);
    });
}

TEST_CASE("visual mapping network produces a prefix row per token") {
    HyperParams hp;
    hp.text_dim = 32;
    hp.visual_dim = 16;
    hp.embed_dim = 64;
    hp.prefix_len = 4;
    hp.desc_tokens = 2;
    hp.hidden_dim = 24;
    const ModelParams<double> p = init_params<double>(hp, 5);

    SplitMix64 rng(11);
    const VectorD x = rand_vector<double>(rng, hp.visual_dim);
    const VisualPrefixes<double> vp = vmn_project(p, x);
    CHECK(vp.prefixes.rows() == 4);
    CHECK(vp.prefixes.cols() == 64);

    // Mean-prefix oracle: plain row average of the projected matrix.
    VectorD mean = VectorD::Zero(hp.embed_dim);
    for (int k = 0; k < hp.prefix_len; ++k) mean += vp.prefixes.row(k).transpose();
    mean /= static_cast<double>(hp.prefix_len);
    CHECK((vp.v_bar - mean).cwiseAbs().maxCoeff() < 1e-12);

    // The same rows come out of the raw MLP, segment by segment.
    const VectorD z = mlp_forward(p.vmn, x);
    for (int k = 0; k < hp.prefix_len; ++k) {
        CHECK((vp.prefixes.row(k).transpose() - z.segment(k * hp.embed_dim, hp.embed_dim))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("entity fusion matches its visual/textual decomposition") {
    const HyperParams hp = tiny_hyper();
    const ModelParams<double> p = init_params<double>(hp, 9);
    SplitMix64 rng(21);

    for (int trial = 0; trial < 20; ++trial) {
        const VectorD xv = rand_vector<double>(rng, hp.visual_dim);
        const VectorD xt = rand_vector<double>(rng, hp.text_dim);
        const EntityEncoding<double> enc = encode_entity(p, xv, xt);

        // e_f is exactly normalize(e_v + e_d).
        const VectorD fused = enc.e_v + enc.e_d;
        CHECK((enc.e_f - fused / fused.norm()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(enc.e_f.norm() == doctest::Approx(1.0).epsilon(1e-12));

        // Token bookkeeping: e_v is the prefix sum over l + m tokens, and
        // v_bar the prefix mean over l alone, so they are parallel.
        const int total = hp.prefix_len + hp.desc_tokens;
        const VectorD scaled =
            enc.v_bar * (static_cast<double>(hp.prefix_len) / static_cast<double>(total));
        CHECK((enc.e_v - scaled).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("zeroed visual branch reduces fusion to the textual part") {
    const HyperParams hp = tiny_hyper();
    ModelParams<double> p = init_params<double>(hp, 13);
    p.vmn.w1.setZero();
    p.vmn.b1.setZero();
    p.vmn.w2.setZero();
    p.vmn.b2.setZero();

    SplitMix64 rng(31);
    const VectorD xv = rand_vector<double>(rng, hp.visual_dim);
    const VectorD xt = rand_vector<double>(rng, hp.text_dim);
    const EntityEncoding<double> enc = encode_entity(p, xv, xt);
    CHECK(enc.v_bar.cwiseAbs().maxCoeff() == 0.0);
    CHECK(enc.e_v.cwiseAbs().maxCoeff() == 0.0);
    CHECK((enc.e_f - enc.e_d / enc.e_d.norm()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("similarity of a vector with itself at unit temperature is e") {
    SplitMix64 rng(41);
    const VectorD q = rand_unit_vector<double>(rng, 16);
    CHECK(similarity(q, q, 1.0) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    CHECK(log_similarity(q, q, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pre-normalization similarity factors into modality parts") {
    const HyperParams hp = tiny_hyper();
    const ModelParams<double> p = init_params<double>(hp, 17);
    SplitMix64 rng(55);
    const double tau = 0.05;

    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const VectorD q = rand_unit_vector<double>(rng, hp.embed_dim);
        const EntityEncoding<double> enc = encode_entity(
            p, rand_vector<double>(rng, hp.visual_dim), rand_vector<double>(rng, hp.text_dim));
        const double log_fused = q.dot(enc.e_v + enc.e_d) / tau;
        const double log_parts = q.dot(enc.e_v) / tau + q.dot(enc.e_d) / tau;
        worst = std::max(worst,
                         std::abs(log_fused - log_parts) / std::max(1.0, std::abs(log_fused)));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("query encoder gradients match finite differences") {
    const HyperParams hp = tiny_hyper();
    SplitMix64 rng(61);

    for (int trial = 0; trial < 5; ++trial) {
        ModelParams<double> p = init_params<double>(hp, 100 + trial);
        const VectorD x = rand_vector<double>(rng, hp.text_dim);
        const VectorD probe = rand_vector<double>(rng, hp.embed_dim);

        QueryCache<double> cache;
        encode_query(p, x, &cache);
        if (cache.mlp.h_pre.cwiseAbs().minCoeff() < 1e-3) continue;  // kink too close

        ModelParams<double> g = zeros_like(p);
        encode_query_backward(p, cache, probe, g);

        const double h = 1e-5;
        double worst = 0.0;
        auto pv = flat_views(p);
        auto gv = flat_views(g);
        for (std::size_t k = 0; k < 4; ++k) {  // query tensors come first
            for (std::size_t i = 0; i < pv[k].second; ++i) {
                const double saved = pv[k].first[i];
                pv[k].first[i] = saved + h;
                const double up = probe.dot(encode_query(p, x));
                pv[k].first[i] = saved - h;
                const double down = probe.dot(encode_query(p, x));
                pv[k].first[i] = saved;
                const double fd = (up - down) / (2.0 * h);
                worst = std::max(worst, std::abs(fd - gv[k].first[i]) /
                                            std::max({1e-4, std::abs(fd),
                                                      std::abs(gv[k].first[i])}));
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("entity encoder gradients match finite differences") {
    const HyperParams hp = tiny_hyper();
    SplitMix64 rng(71);

    int checked = 0;
    for (int trial = 0; trial < 10 && checked < 5; ++trial) {
        ModelParams<double> p = init_params<double>(hp, 200 + trial);
        const VectorD xv = rand_vector<double>(rng, hp.visual_dim);
        const VectorD xt = rand_vector<double>(rng, hp.text_dim);
        const VectorD probe_f = rand_vector<double>(rng, hp.embed_dim);
        const VectorD probe_v = rand_vector<double>(rng, hp.embed_dim);

        EntityCache<double> cache;
        encode_entity(p, xv, xt, &cache);
        if (cache.vmn.h_pre.cwiseAbs().minCoeff() < 1e-3) continue;
        ++checked;

        ModelParams<double> g = zeros_like(p);
        encode_entity_backward(p, cache, probe_f, probe_v, g);

        auto value = [&] {
            const EntityEncoding<double> e = encode_entity(p, xv, xt);
            return probe_f.dot(e.e_f) + probe_v.dot(e.v_bar);
        };
        const double h = 1e-5;
        double worst = 0.0;
        auto pv = flat_views(p);
        auto gv = flat_views(g);
        for (std::size_t k = 4; k < pv.size(); ++k) {  // vmn + desc tensors
            for (std::size_t i = 0; i < pv[k].second; ++i) {
                const double saved = pv[k].first[i];
                pv[k].first[i] = saved + h;
                const double up = value();
                pv[k].first[i] = saved - h;
                const double down = value();
                pv[k].first[i] = saved;
                const double fd = (up - down) / (2.0 * h);
                worst = std::max(worst, std::abs(fd - gv[k].first[i]) /
                                            std::max({1e-4, std::abs(fd),
                                                      std::abs(gv[k].first[i])}));
            }
        }
        CHECK(worst < 1e-4);
    }
    CHECK(checked >= 3);
}

TEST_CASE("initialization is seed-deterministic and seed-sensitive") {
    const HyperParams hp = tiny_hyper();
    const ModelParams<float> a = init_params<float>(hp, 42);
    const ModelParams<float> b = init_params<float>(hp, 42);
    const ModelParams<float> c = init_params<float>(hp, 43);

    bool same_ab = true, same_ac = true;
    for_each_tensor(a, [&](const std::string& name, const auto& t) {
        for_each_tensor(b, [&](const std::string& bname, const auto& bt) {
            if (bname == name && (t - bt).cwiseAbs().maxCoeff() != 0.0f) same_ab = false;
        });
        for_each_tensor(c, [&](const std::string& cname, const auto& ct) {
            if (cname == name && (t - ct).cwiseAbs().maxCoeff() != 0.0f) same_ac = false;
        });
    });
    CHECK(same_ab);
    CHECK(!same_ac);
}

TEST_CASE("checkpoint roundtrip restores every tensor exactly") {
    TempDir dir("ckpt");
    const HyperParams hp = tiny_hyper();
    const ModelParams<float> p = init_params<float>(hp, 7);
    const std::string path = dir.file("model.cmrp");
    save_checkpoint(path, p);
    const ModelParams<float> q = load_checkpoint(path);

    CHECK(q.hyper.text_dim == hp.text_dim);
    CHECK(q.hyper.visual_dim == hp.visual_dim);
    CHECK(q.hyper.embed_dim == hp.embed_dim);
    CHECK(q.hyper.prefix_len == hp.prefix_len);
    CHECK(q.hyper.desc_tokens == hp.desc_tokens);
    CHECK(q.hyper.hidden_dim == hp.hidden_dim);
    CHECK(q.hyper.temperature == hp.temperature);
    for_each_tensor(p, [&](const std::string& name, const auto& t) {
        for_each_tensor(q, [&](const std::string& qname, const auto& qt) {
            if (qname == name) CHECK((t - qt).cwiseAbs().maxCoeff() == 0.0f);
        });
    });

    // Saving the loaded copy reproduces the file bitwise.
    const std::string path2 = dir.file("model2.cmrp");
    save_checkpoint(path2, q);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));
}

TEST_CASE("corrupted checkpoints are rejected by the content hash") {
    TempDir dir("ckpt_bad");
    const std::string path = dir.file("model.cmrp");
    save_checkpoint(path, init_params<float>(tiny_hyper(), 7));

    auto bytes = read_file_bytes(path);
    bytes[bytes.size() / 2] ^= 0x01;
    write_file_bytes(path, bytes);
    CHECK_THROWS_AS(load_checkpoint(path), IntegrityError);
}

TEST_CASE("truncated checkpoints fail the format check") {
    TempDir dir("ckpt_short");
    const std::string path = dir.file("model.cmrp");
    save_checkpoint(path, init_params<float>(tiny_hyper(), 7));
    auto bytes = read_file_bytes(path);
    bytes.resize(bytes.size() / 2);
    write_file_bytes(path, bytes);
    CHECK_THROWS(load_checkpoint(path));
}

TEST_CASE("hyperparameter validation rejects out-of-range shapes") {
    HyperParams hp = tiny_hyper();
    hp.prefix_len = 0;
    CHECK_THROWS_AS(hp.validate(), ConfigError);
    hp = tiny_hyper();
    hp.temperature = 0.0f;
    CHECK_THROWS_AS(hp.validate(), ConfigError);
    hp = tiny_hyper();
    hp.embed_dim = -1;
    CHECK_THROWS_AS(hp.validate(), ConfigError);
}
