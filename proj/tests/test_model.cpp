#include "oracles.hpp"
#include "support.hpp"

#include "scanfer/data.hpp"
#include "scanfer/errors.hpp"
#include "scanfer/gradcheck.hpp"
#include "scanfer/model.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace scanfer;
using namespace testutil;

namespace {

// Ceil-first split written as "each part takes the ceiling of what is left
// divided by the parts left".
std::vector<Index> split_sizes(Index length, Index parts) {
    std::vector<Index> sizes;
    Index left = length;
    for (Index p = parts; p > 0; --p) {
        const Index s = (left + p - 1) / p;
        sizes.push_back(s);
        left -= s;
    }
    return sizes;
}

void randomize_model(FerModel& m, Rng& rng) {
    for (auto& st : m.stages) {
        const Index c = st.bn_gamma.value().size();
        st.bn_gamma.value() = random_tensor({c}, rng, 0.5, 2.0);
        st.bn_beta.value() = random_tensor({c}, rng, -0.5, 0.5);
        st.prelu_slope.value() = random_tensor({c}, rng, 0.05, 0.5);
        st.bn_stats.mean = random_tensor({c}, rng, -0.2, 0.2);
        st.bn_stats.var = random_tensor({c}, rng, 0.3, 3.0);
    }
    randomize_scan(m.scan, rng);
    for (auto* d : {&m.head_u}) d->bias.value() = random_tensor(d->bias.shape(), rng);
}

Tensor first_sample(const Tensor& batch) {
    Shape s(batch.shape().begin() + 1, batch.shape().end());
    Tensor out(s);
    out.data() = batch.data().head(out.size());
    return out;
}

Tensor patch_max_oracle(const FerModel& m, const Tensor& f_u) {
    const auto rows = split_sizes(f_u.dim(1), m.config().grid_rows);
    const auto cols = split_sizes(f_u.dim(2), m.config().grid_cols);
    Tensor best({f_u.dim(0)}, -INFINITY);
    Index r0 = 0;
    for (Index rh : rows) {
        Index c0 = 0;
        for (Index cw : cols) {
            const Tensor d = gap_oracle(scan_oracle(m.scan, crop_oracle(f_u, r0, rh, c0, cw)));
            for (Index c = 0; c < d.size(); ++c) best[c] = std::max(best[c], d[c]);
            c0 += cw;
        }
        r0 += rh;
    }
    return best;
}

std::vector<Tensor> quadrant_oracle(const FerModel& m, const Tensor& f_l) {
    const Tensor g = eca_oracle(f_l, m.eca.kernel.value());
    const Index h = f_l.dim(1) / 2, w = f_l.dim(2) / 2;
    std::vector<Tensor> hs;
    for (Index qr = 0; qr < 2; ++qr)
        for (Index qc = 0; qc < 2; ++qc) {
            Tensor mean({f_l.dim(0)});
            for (Index c = 0; c < f_l.dim(0); ++c) {
                double s = 0;
                for (Index i = 0; i < h; ++i)
                    for (Index j = 0; j < w; ++j) s += g.at({c, qr * h + i, qc * w + j});
                mean[c] = s / static_cast<double>(h * w);
            }
            hs.push_back(mean);
        }
    return hs;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("partition examples") {
    const auto e28 = partition_extents(28, 5);
    std::vector<Index> sizes;
    for (auto [o, s] : e28) sizes.push_back(s);
    CHECK(sizes == std::vector<Index>{6, 6, 6, 5, 5});

    Rng rng(1);
    const Tensor f = random_tensor({1, 3, 14, 14}, rng);
    const auto blocks = partition(Variable(f), 2, 2);
    REQUIRE(blocks.size() == 4);
    for (const auto& b : blocks) CHECK(b.shape() == Shape{1, 3, 7, 7});
    CHECK_THROWS_AS(partition(Variable(f), 15, 2), ShapeError);
}

TEST_CASE("partition tiles every grid exactly") {
    for (Index len = 1; len <= 64; ++len)
        for (Index parts = 1; parts <= len; ++parts) {
            const auto ext = partition_extents(len, parts);
            const auto ref = split_sizes(len, parts);
            REQUIRE(ext.size() == static_cast<std::size_t>(parts));
            Index next = 0;
            for (std::size_t i = 0; i < ext.size(); ++i) {
                CHECK(ext[i].first == next);
                CHECK(ext[i].second == ref[i]);
                next += ext[i].second;
            }
            CHECK(next == len);
        }

    Rng rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        const Index h = 1 + static_cast<Index>(rng.below(64)), w = 1 + static_cast<Index>(rng.below(64));
        const Index rows = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(h)));
        const Index cols = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(w)));
        Tensor f({1, h, w});
        for (Index i = 0; i < f.size(); ++i) f[i] = static_cast<double>(i);
        const auto blocks = partition(Variable(f), rows, cols);
        Tensor cover({h, w}, 0.0);
        Tensor rebuilt({1, h, w}, -1.0);
        const auto re = partition_extents(h, rows), ce = partition_extents(w, cols);
        for (Index br = 0; br < rows; ++br)
            for (Index bc = 0; bc < cols; ++bc) {
                const Tensor& b = blocks[static_cast<std::size_t>(br * cols + bc)].value();
                const auto [r0, rh] = re[static_cast<std::size_t>(br)];
                const auto [c0, cw] = ce[static_cast<std::size_t>(bc)];
                REQUIRE(b.shape() == Shape{1, rh, cw});
                for (Index i = 0; i < rh; ++i)
                    for (Index j = 0; j < cw; ++j) {
                        cover.at({r0 + i, c0 + j}) += 1.0;
                        rebuilt.at({0, r0 + i, c0 + j}) = b.at({0, i, j});
                    }
            }
        for (double v : cover.values()) CHECK(v == 1.0);
        CHECK(bitwise_equal(rebuilt, f));
    }
}

TEST_CASE("backbone presets") {
    const BackboneConfig desk = BackboneConfig::desk();
    CHECK(desk.input_size == 40);
    CHECK(desk.channels[static_cast<std::size_t>(desk.tap_u)] == 32);
    CHECK(desk.spatial_after(desk.tap_u) == 20);
    CHECK(desk.channels[static_cast<std::size_t>(desk.tap_l)] == 64);
    CHECK(desk.spatial_after(desk.tap_l) == 10);

    const BackboneConfig paper = BackboneConfig::paper();
    CHECK(paper.input_size == 224);
    CHECK(paper.channels[static_cast<std::size_t>(paper.tap_u)] == 512);
    CHECK(paper.spatial_after(paper.tap_u) == 28);
    CHECK(paper.channels[static_cast<std::size_t>(paper.tap_l)] == 1024);
    CHECK(paper.spatial_after(paper.tap_l) == 14);
    CHECK_NOTHROW(paper.validate());

    BackboneConfig bad = desk;
    bad.tap_l = 0;
    CHECK_THROWS(bad.validate());
    ModelConfig mc;
    mc.lambda = 1.5;
    CHECK_THROWS(mc.validate());
}

TEST_CASE("desk model tap shapes") {
    FerModel m = FerModel::create(ModelConfig{}, 3);
    Rng rng(3);
    const auto out = m.forward(random_tensor({2, 3, 40, 40}, rng, 0, 1), Mode::eval);
    CHECK(out.taps.f_u.shape() == Shape{2, 32, 20, 20});
    CHECK(out.taps.f_l.shape() == Shape{2, 64, 10, 10});
    CHECK(out.logits_u.shape() == Shape{2, 7});
    CHECK(out.logits_cci.size() == 4);
    CHECK(out.v_l.shape() == Shape{2, 32});
    CHECK(!out.loss);
    CHECK_THROWS_AS(m.forward(Tensor({3, 32, 32}), Mode::eval), ShapeError);
    CHECK(m.eca.kernel_size() == 3);
}

TEST_CASE("local_global_branch on a zero map") {
    FerModel m = FerModel::create(ModelConfig{}, 4);
    Rng rng(4);
    m.head_u.bias.value() = random_tensor({7}, rng);
    const auto lg = m.local_global_branch(Variable(Tensor({1, 32, 20, 20})), Mode::eval);
    for (double v : lg.v_l.value().values()) CHECK(v == 0.0);
    for (double v : lg.v_g.value().values()) CHECK(v == 0.0);
    CHECK(lg.logits.value().reshaped({7}) == m.head_u.bias.value());
}

TEST_CASE("single-patch grid makes V_l equal V_g") {
    ModelConfig cfg;
    cfg.grid_rows = cfg.grid_cols = 1;
    FerModel m = FerModel::create(cfg, 5);
    Rng rng(5);
    randomize_scan(m.scan, rng);
    const auto lg = m.local_global_branch(Variable(random_tensor({1, 32, 20, 20}, rng)), Mode::eval);
    CHECK(max_abs_diff(lg.v_l.value(), lg.v_g.value()) < 1e-12);
}

TEST_CASE("V_l is the max over independently recomputed patch descriptors") {
    FerModel m = FerModel::create(ModelConfig{}, 6);
    Rng rng(6);
    randomize_scan(m.scan, rng);
    const Tensor f_u = random_tensor({1, 32, 20, 20}, rng, -1, 1);
    const auto lg = m.local_global_branch(Variable(f_u), Mode::eval);
    CHECK(lg.patch_descriptors.size() == 25);
    const Tensor ref = patch_max_oracle(m, first_sample(f_u));
    CHECK(max_abs_diff(lg.v_l.value().reshaped({32}), ref) < 1e-12);
    CHECK(max_abs_diff(lg.v_g.value().reshaped({32}), gap_oracle(scan_oracle(m.scan, first_sample(f_u)))) < 1e-12);
}

TEST_CASE("V_l on an uneven 28 x 28 grid") {
    ModelConfig cfg;
    FerModel m = FerModel::create(cfg, 7);
    Rng rng(7);
    randomize_scan(m.scan, rng);
    const Tensor f_u = random_tensor({1, 32, 28, 28}, rng, -1, 1);
    const auto lg = m.local_global_branch(Variable(f_u), Mode::eval);
    CHECK(max_abs_diff(lg.v_l.value().reshaped({32}), patch_max_oracle(m, first_sample(f_u))) < 1e-12);
}

TEST_CASE("cci_branch") {
    FerModel m = FerModel::create(ModelConfig{}, 8);
    Rng rng(8);
    const auto zero = m.cci_branch(Variable(Tensor({1, 64, 10, 10})), Mode::eval);
    REQUIRE(zero.h.size() == 4);
    for (const auto& h : zero.h)
        for (double v : h.value().values()) CHECK(v == 0.0);

    Tensor flat({1, 64, 10, 10});
    for (Index c = 0; c < 64; ++c)
        for (Index i = 0; i < 100; ++i) flat[c * 100 + i] = std::sin(static_cast<double>(c) + 0.5);
    const auto same = m.cci_branch(Variable(flat), Mode::eval);
    for (std::size_t i = 1; i < 4; ++i) CHECK(max_abs_diff(same.h[i].value(), same.h[0].value()) < 1e-12);

    const Tensor f_l = random_tensor({1, 64, 10, 10}, rng, -1, 1);
    const auto out = m.cci_branch(Variable(f_l), Mode::eval);
    const auto ref = quadrant_oracle(m, first_sample(f_l));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(max_abs_diff(out.h[i].value().reshaped({64}), ref[i]) < 1e-12);
        const Tensor proj = linear_oracle(ref[i], m.cci_projections[i].weight.value(), m.cci_projections[i].bias.value());
        const Tensor logits = linear_oracle(proj, m.cci_heads[i].weight.value(), m.cci_heads[i].bias.value());
        CHECK(max_abs_diff(out.logits[i].value().reshaped({7}), logits) < 1e-12);
    }
    CHECK(m.cci_projections[0].weight.shape() == Shape{256, 64});
    CHECK_THROWS_AS(m.cci_branch(Variable(Tensor({1, 64, 1, 10})), Mode::eval), ShapeError);
}

TEST_CASE("loss combination identities") {
    const std::vector<double> half{0.5, 0.5, 0.5, 0.5};
    CHECK(combine_losses(0.2, 1.0, half) == 1.8);
    CHECK(combine_losses(1.0, 1.37, half) == 1.37);
    CHECK(combine_losses(0.0, 1.37, half) == 2.0);
    CHECK_THROWS(combine_losses(-0.1, 1.0, half));

    Rng rng(9);
    const Variable zu(random_tensor({3, 7}, rng));
    std::vector<Variable> zc;
    for (int i = 0; i < 4; ++i) zc.emplace_back(random_tensor({3, 7}, rng));
    const std::vector<int> y{1, 0, 6};
    const auto one = total_loss(1.0, zu, zc, y);
    CHECK(one.total.value().item() == one.l_u.value().item());
    const auto zero = total_loss(0.0, zu, zc, y);
    CHECK(zero.total.value().item() == zero.l_l.value().item());
    const auto t = total_loss(0.2, zu, zc, y);
    double sum_li = 0;
    for (const auto& l : t.l_i) sum_li += l.value().item();
    CHECK(std::abs(t.l_l.value().item() - sum_li) < 1e-12);
    CHECK(t.total.value().item() == 0.2 * t.l_u.value().item() + (1.0 - 0.2) * t.l_l.value().item());
    CHECK_THROWS_AS(total_loss(0.2, zu, zc, std::vector<int>{1, 0, 7}), std::out_of_range);
}

TEST_CASE("zero image with zeroed heads gives 3.4 ln 7") {
    FerModel m = FerModel::create(ModelConfig{}, 10);
    for (auto* d : {&m.head_u}) d->weight.value().data().setZero(), d->bias.value().data().setZero();
    for (auto& d : m.cci_heads) d.weight.value().data().setZero(), d.bias.value().data().setZero();
    const std::vector<int> y{3};
    const auto out = m.forward(Tensor({3, 40, 40}), y, Mode::eval);
    REQUIRE(out.loss);
    CHECK(out.loss->l_u.value().item() == doctest::Approx(std::log(7.0)).epsilon(1e-14));
    for (const auto& l : out.loss->l_i) CHECK(l.value().item() == doctest::Approx(std::log(7.0)).epsilon(1e-14));
    CHECK(out.loss->total.value().item() == doctest::Approx(3.4 * std::log(7.0)).epsilon(1e-14));
}

TEST_CASE("full loss matches an end-to-end oracle") {
    FerModel m = FerModel::create(ModelConfig{}, 11);
    Rng rng(11);
    randomize_model(m, rng);
    const Tensor image = random_tensor({3, 40, 40}, rng, 0, 1);
    const int label = 4;
    const std::vector<int> y{label};
    const auto out = m.forward(image, y, Mode::eval);

    Tensor x = image, f_u, f_l;
    for (std::size_t i = 0; i < m.stages.size(); ++i) {
        const auto& st = m.stages[i];
        x = conv_oracle(x, st.conv_weight.value(), Tensor({st.conv_weight.shape()[0]}), 2, 1);
        x = bn_eval_oracle(x, st.bn_gamma.value(), st.bn_beta.value(), st.bn_stats.mean, st.bn_stats.var);
        x = prelu_oracle(x, st.prelu_slope.value());
        if (i == 0) f_u = x;
        if (i == 1) f_l = x;
    }
    const Tensor v_l = patch_max_oracle(m, f_u);
    const Tensor v_g = gap_oracle(scan_oracle(m.scan, f_u));
    Tensor cat({64});
    cat.data() << v_l.data(), v_g.data();
    const Tensor logits_u = linear_oracle(cat, m.head_u.weight.value(), m.head_u.bias.value());
    long double total = 0.2L * cross_entropy_oracle(logits_u, label);
    const auto hs = quadrant_oracle(m, f_l);
    for (std::size_t i = 0; i < 4; ++i) {
        const Tensor p = linear_oracle(hs[i], m.cci_projections[i].weight.value(), m.cci_projections[i].bias.value());
        total += 0.8L * cross_entropy_oracle(linear_oracle(p, m.cci_heads[i].weight.value(), m.cci_heads[i].bias.value()), label);
    }
    CHECK(max_abs_diff(out.logits_u.value().reshaped({7}), logits_u) < 1e-10);
    CHECK(std::abs(out.loss->total.value().item() - static_cast<double>(total)) < 1e-10);
}

TEST_CASE("scan parameters receive gradient through both halves of the head") {
    Rng rng(12);
    const Tensor images = random_tensor({2, 3, 40, 40}, rng, 0, 1);
    const std::vector<int> y{1, 5};
    for (int half = 0; half < 2; ++half) {
        FerModel m = FerModel::create(ModelConfig{}, 12);
        auto w = m.head_u.weight.value().matrix(7, 64);
        w.middleCols(half * 32, 32).setZero();
        const auto out = m.forward(images, y, Mode::train);
        backward(out.loss->l_u);
        CHECK(m.scan.conv_weight.grad().data().norm() > 0.0);
        CHECK(m.scan.bn_gamma.grad().data().norm() > 0.0);
    }
}

TEST_CASE("eval forward is bitwise deterministic") {
    FerModel m = FerModel::create(ModelConfig{}, 13);
    Rng rng(13);
    const Tensor images = random_tensor({2, 3, 40, 40}, rng, 0, 1);
    const auto a = m.forward(images, Mode::eval);
    const auto b = m.forward(images, Mode::eval);
    CHECK(bitwise_equal(a.logits_u.value(), b.logits_u.value()));
    for (std::size_t i = 0; i < 4; ++i) CHECK(bitwise_equal(a.logits_cci[i].value(), b.logits_cci[i].value()));
}

TEST_CASE("predict") {
    const std::vector<double> spike{0, 0, 0, 9, 0, 0, 0};
    CHECK(argmax(spike) == 3);
    CHECK(argmax(std::vector<double>(7, 0.4)) == 0);

    FerModel m = FerModel::create(ModelConfig{}, 14);
    Rng rng(14);
    for (int i = 0; i < 100; ++i) {
        const Tensor img = synth_image(static_cast<int>(rng.below(7)), 40, rng);
        const auto out = m.forward(img, Mode::eval);
        const auto z = out.logits_u.value().values();
        std::size_t best = 0;
        for (std::size_t k = 1; k < z.size(); ++k)
            if (z[k] > z[best]) best = k;
        CHECK(m.predict(img) == static_cast<int>(best));
        std::vector<double> scaled(z.begin(), z.end());
        for (double& v : scaled) v *= 3.7;
        CHECK(argmax(scaled) == static_cast<int>(best));
    }
    ImageSet set;
    for (int i = 0; i < 3; ++i) set.images.push_back(synth_image(i, 40, rng)), set.labels.push_back(i);
    const std::vector<std::size_t> idx{0, 1, 2};
    const auto batch = m.predict_batch(set.batch(idx));
    for (std::size_t i = 0; i < 3; ++i) CHECK(batch[i] == m.predict(set.images[i]));
}

TEST_CASE("parameters, groups and snapshots") {
    FerModel m = FerModel::create(ModelConfig{}, 15);
    for (const auto& p : m.parameters()) {
        const bool backbone = p.name.rfind("backbone.", 0) == 0;
        CHECK((p.group == ParamGroup::backbone) == backbone);
        const bool is_weight = p.name.ends_with(".weight") && p.name.find(".bn.") == std::string::npos;
        CHECK(p.decay == (is_weight || p.name == "eca.kernel"));
    }
    const StateDict before = m.snapshot();
    FerModel other = FerModel::create(ModelConfig{}, 16);
    CHECK(!(other.snapshot() == before));
    other.restore(before);
    CHECK(other.snapshot() == before);
    m.head_u.bias.value()[0] += 1.0;
    CHECK(other.head_u.bias.value()[0] != m.head_u.bias.value()[0]);
}

TEST_CASE("check_parameters re-measures steps that cross a kink") {
    // One input sits 3e-6 below the PReLU hinge, closer than the default step.
    Variable shift(Tensor({3}, 0.0), true);
    const Tensor x({3}, {-3e-6, 0.4, -0.7});
    auto loss = [&] { return sum(prelu(add(Variable(x), shift), Variable(Tensor({1}, 0.25)))); };
    const auto report = check_parameters(loss, {{"shift", shift}});
    REQUIRE(report.size() == 1);
    CHECK(report[0].refined == 1);
    CHECK(report[0].skipped == 0);
    CHECK(report[0].max_rel_error < 1e-6);

    testing_hooks::set_corrupt_backward(true);
    Variable s(Tensor({4}, 0.3), true);
    const auto bad = check_parameters([&] { return sum(sigmoid(s)); }, {{"s", s}});
    testing_hooks::set_corrupt_backward(false);
    CHECK(bad[0].max_rel_error > 0.1);
}

}  // TEST_SUITE
