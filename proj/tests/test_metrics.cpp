#include <catch2/catch_amalgamated.hpp>

#include "iid/metrics.hpp"

#include <cmath>

using namespace iid;
using namespace iid::metrics;

namespace {

Image random_image(Rng& rng, int h, int w, int c, double lo = 0.0, double hi = 1.0) {
    Image img(h, w, c);
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

double mse_oracle(const Image& a, const Image& b) {
    double acc = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < a.height; ++r)
        for (int c = 0; c < a.width; ++c)
            for (int ch = 0; ch < a.channels; ++ch) {
                const double d = a.at(r, c, ch) - b.at(r, c, ch);
                acc += d * d;
                ++n;
            }
    return acc / static_cast<double>(n);
}

double smse_oracle(const Image& pred, const Image& gt) {
    double pg = 0.0, pp = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pg += pred.data[i] * gt.data[i];
        pp += pred.data[i] * pred.data[i];
    }
    const double alpha = pp > 0.0 ? pg / pp : 0.0;
    Image scaled = pred;
    for (double& v : scaled.data) v *= alpha;
    return mse_oracle(scaled, gt);
}

double lmse_oracle(const Image& pred, const Image& gt, int window, int stride) {
    auto starts = [&](int extent) {
        std::vector<int> s;
        for (int p = 0; p + window <= extent; p += stride) s.push_back(p);
        if (s.empty() || s.back() + window != extent) s.push_back(extent - window);
        return s;
    };
    const auto rows = starts(pred.height);
    const auto cols = starts(pred.width);
    double total = 0.0;
    for (int ch = 0; ch < pred.channels; ++ch) {
        double acc = 0.0;
        for (int r0 : rows)
            for (int c0 : cols) {
                Image pw(window, window, 1), gw(window, window, 1);
                for (int r = 0; r < window; ++r)
                    for (int c = 0; c < window; ++c) {
                        pw.at(r, c) = pred.at(r0 + r, c0 + c, ch);
                        gw.at(r, c) = gt.at(r0 + r, c0 + c, ch);
                    }
                acc += smse_oracle(pw, gw);
            }
        total += acc / (static_cast<double>(rows.size()) * cols.size());
    }
    return total / pred.channels;
}

// Sliding-window SSIM oracle computed on a different numerical path:
// weighted central moments from explicit deviations.
double dssim_oracle(const Image& pred, const Image& gt) {
    const auto& kern = ssim_kernel();
    const int win = kSsimWindow;
    const int Ho = pred.height - win + 1;
    const int Wo = pred.width - win + 1;
    double total = 0.0;
    for (int ch = 0; ch < pred.channels; ++ch) {
        double acc = 0.0;
        for (int r0 = 0; r0 < Ho; ++r0)
            for (int c0 = 0; c0 < Wo; ++c0) {
                double mx = 0.0, my = 0.0;
                for (int ky = 0; ky < win; ++ky)
                    for (int kx = 0; kx < win; ++kx) {
                        mx += kern[ky * win + kx] * pred.at(r0 + ky, c0 + kx, ch);
                        my += kern[ky * win + kx] * gt.at(r0 + ky, c0 + kx, ch);
                    }
                double vx = 0.0, vy = 0.0, cov = 0.0;
                for (int ky = 0; ky < win; ++ky)
                    for (int kx = 0; kx < win; ++kx) {
                        const double w = kern[ky * win + kx];
                        const double dx = pred.at(r0 + ky, c0 + kx, ch) - mx;
                        const double dy = gt.at(r0 + ky, c0 + kx, ch) - my;
                        vx += w * dx * dx;
                        vy += w * dy * dy;
                        cov += w * dx * dy;
                    }
                acc += ((2.0 * mx * my + kSsimC1) * (2.0 * cov + kSsimC2)) /
                       ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
            }
        total += acc / (static_cast<double>(Ho) * Wo);
    }
    return (1.0 - total / pred.channels) / 2.0;
}

double whdr_oracle(const Image& pred, const std::vector<OrdinalJudgment>& js, double delta) {
    const Image l = luminance(pred);
    double bad = 0.0, tot = 0.0;
    for (const auto& j : js) {
        const double la = std::max(l.at(j.ar, j.ac), 1e-6);
        const double lb = std::max(l.at(j.br, j.bc), 1e-6);
        DarkerLabel p;
        if (la / lb > 1.0 + delta) p = DarkerLabel::BDarker;
        else if (lb / la > 1.0 + delta) p = DarkerLabel::ADarker;
        else p = DarkerLabel::Equal;
        if (p != j.label) bad += j.weight;
        tot += j.weight;
    }
    return bad / tot;
}

} // namespace

TEST_CASE("mse basics and oracle") {
    Rng rng(1);
    Image gt = random_image(rng, 16, 16, 3);
    CHECK(mse(gt, gt) == 0.0);
    Image off = gt;
    for (double& v : off.data) v += 0.1;
    CHECK(mse(off, gt) == Catch::Approx(0.01).margin(1e-15));
    Image pred = random_image(rng, 16, 16, 3);
    CHECK(mse(pred, gt) == Catch::Approx(mse_oracle(pred, gt)).margin(1e-14));
}

TEST_CASE("smse scale invariance and orthogonal case") {
    Rng rng(2);
    Image gt = random_image(rng, 12, 12, 3, 0.1, 0.9);
    for (double c : {0.1, 2.0, 10.0}) {
        Image scaled = gt;
        for (double& v : scaled.data) v *= c;
        CHECK(smse(scaled, gt) == Catch::Approx(0.0).margin(1e-12));
    }
    // pred orthogonal to gt: alpha* = 0, smse = mean(gt^2)
    Image pred(2, 2, 1), gt2(2, 2, 1);
    pred.data = {1.0, -1.0, 0.0, 0.0};
    gt2.data = {1.0, 1.0, 0.5, 0.25};
    double mean_sq = 0.0;
    for (double v : gt2.data) mean_sq += v * v;
    mean_sq /= 4.0;
    CHECK(smse(pred, gt2) == Catch::Approx(mean_sq).margin(1e-15));

    Image r1 = random_image(rng, 16, 16, 3);
    Image r2 = random_image(rng, 16, 16, 3);
    CHECK(smse(r1, r2) == Catch::Approx(smse_oracle(r1, r2)).margin(1e-13));
}

TEST_CASE("smse argument-scale invariance to 1e-12") {
    Rng rng(3);
    Image pred = random_image(rng, 10, 10, 3, 0.05, 1.0);
    Image gt = random_image(rng, 10, 10, 3, 0.05, 1.0);
    const double base = smse(pred, gt);
    for (double c : {0.1, 2.0, 10.0}) {
        Image scaled = pred;
        for (double& v : scaled.data) v *= c;
        CHECK(smse(scaled, gt) == Catch::Approx(base).margin(1e-12));
    }
}

TEST_CASE("mse is scale sensitive where smse is not") {
    Rng rng(4);
    Image gt = random_image(rng, 8, 8, 1, 0.2, 0.9);
    Image doubled = gt;
    for (double& v : doubled.data) v *= 2.0;
    CHECK(mse(doubled, gt) > 0.01);
    CHECK(smse(doubled, gt) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("lmse basics and oracle") {
    Rng rng(5);
    Image gt = random_image(rng, 32, 32, 3);
    CHECK(lmse(gt, gt) == 0.0);
    Image scaled = gt;
    for (double& v : scaled.data) v *= 3.0;
    CHECK(lmse(scaled, gt) == Catch::Approx(0.0).margin(1e-12));

    Image pred = random_image(rng, 32, 32, 3);
    CHECK(lmse(pred, gt) == Catch::Approx(lmse_oracle(pred, gt, 20, 10)).margin(1e-13));

    Image small(8, 8, 1, 0.5);
    CHECK_THROWS_AS(lmse(small, small), ShapeError);
}

TEST_CASE("quadrant construction: lmse 0 but global smse positive") {
    // Ground truth has nonzero 10x10 corner blocks separated by zero bands
    // so every 20x20 window at stride 10 sees a single scale region.
    Rng rng(6);
    Image gt(40, 40, 1, 0.0);
    auto fill_block = [&](int r0, int c0) {
        for (int r = r0; r < r0 + 10; ++r)
            for (int c = c0; c < c0 + 10; ++c) gt.at(r, c) = rng.uniform(0.2, 0.9);
    };
    fill_block(0, 0);
    fill_block(0, 30);
    fill_block(30, 0);
    fill_block(30, 30);
    Image pred = gt;
    // Quadrant rows >= 20, cols >= 20 scaled by exactly 2.
    for (int r = 20; r < 40; ++r)
        for (int c = 20; c < 40; ++c) pred.at(r, c) *= 2.0;

    CHECK(lmse(pred, gt) == 0.0);
    CHECK(smse(pred, gt) > 1e-4);
    CHECK(lmse_oracle(pred, gt, 20, 10) == 0.0);
    CHECK(smse_oracle(pred, gt) > 1e-4);
}

TEST_CASE("dssim basics") {
    Rng rng(7);
    Image gt = random_image(rng, 16, 16, 3);
    CHECK(dssim(gt, gt) == Catch::Approx(0.0).margin(1e-15));

    // Constant images: closed-form single-window SSIM with zero variances.
    Image ca(16, 16, 1, 0.3), cb(16, 16, 1, 0.7);
    const double expect =
        (1.0 - (2.0 * 0.3 * 0.7 + kSsimC1) / (0.3 * 0.3 + 0.7 * 0.7 + kSsimC1)) / 2.0;
    CHECK(dssim(ca, cb) == Catch::Approx(expect).margin(1e-12));

    // Inverted high-contrast image: dissimilarity strictly positive, <= 1.
    Image hc(16, 16, 1, 0.0);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) hc.at(r, c) = ((r / 4 + c / 4) % 2) ? 1.0 : 0.0;
    Image inv = hc;
    for (double& v : inv.data) v = 1.0 - v;
    const double d = dssim(inv, hc);
    CHECK(d > 0.0);
    CHECK(d <= 1.0);
}

TEST_CASE("dssim matches sliding-window oracle on random 64x64 pairs") {
    Rng rng(8);
    for (int i = 0; i < 3; ++i) {
        Image pred = random_image(rng, 64, 64, 3);
        Image gt = random_image(rng, 64, 64, 3);
        CHECK(dssim(pred, gt) == Catch::Approx(dssim_oracle(pred, gt)).margin(1e-10));
    }
    Image bad(16, 16, 1, 1.5);
    CHECK_THROWS_AS(dssim(bad, bad), DomainError);
}

TEST_CASE("whdr self-consistency, flips, and oracle") {
    Rng rng(9);
    Image gt = random_image(rng, 16, 16, 3, 0.1, 0.9);
    auto js = synth_judgments(gt, 200, 77);
    CHECK(whdr(gt, js) == 0.0);

    auto flipped = js;
    for (auto& j : flipped)
        j.label = j.label == DarkerLabel::ADarker  ? DarkerLabel::BDarker
                  : j.label == DarkerLabel::BDarker ? DarkerLabel::ADarker
                                                    : DarkerLabel::ADarker;
    CHECK(whdr(gt, flipped) == 1.0);

    Image pred = random_image(rng, 16, 16, 3, 0.1, 0.9);
    CHECK(whdr(pred, js) == Catch::Approx(whdr_oracle(pred, js, 0.10)).margin(1e-15));

    CHECK_THROWS_AS(whdr(gt, {}), EmptyDomainError);
}

TEST_CASE("whdr is invariant under global positive scaling") {
    Rng rng(10);
    Image gt = random_image(rng, 16, 16, 3, 0.1, 0.9);
    Image pred = random_image(rng, 16, 16, 3, 0.1, 0.9);
    auto js = synth_judgments(gt, 150, 5);
    const double base = whdr(pred, js);
    for (double c : {0.1, 3.0}) {
        Image scaled = pred;
        for (double& v : scaled.data) v *= c;
        CHECK(whdr(scaled, js) == base);
    }
}

TEST_CASE("synth_judgments determinism and constant patches") {
    Rng rng(11);
    Image gt = random_image(rng, 16, 16, 3, 0.1, 0.9);
    auto a = synth_judgments(gt, 50, 123);
    auto b = synth_judgments(gt, 50, 123);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].ar == b[i].ar);
        CHECK(a[i].ac == b[i].ac);
        CHECK(a[i].br == b[i].br);
        CHECK(a[i].bc == b[i].bc);
        CHECK(a[i].label == b[i].label);
    }

    Image flat(16, 16, 3, 0.4);
    for (const auto& j : synth_judgments(flat, 60, 9)) CHECK(j.label == DarkerLabel::Equal);

    CHECK_THROWS_AS(synth_judgments(gt, 0, 1), ConfigError);
}

TEST_CASE("metrics report aggregates means") {
    MetricsReport rep;
    rep.names = {"a", "b"};
    rep.reflectance = {{0.1, 0.2, 0.3, 0.4}, {0.3, 0.4, 0.5, 0.6}};
    rep.shading = {{0.0, 0.0, 0.0, 0.0}, {0.2, 0.2, 0.2, 0.2}};
    rep.finalize();
    CHECK(rep.mean_reflectance.mse == Catch::Approx(0.2));
    CHECK(rep.mean_reflectance.dssim == Catch::Approx(0.5));
    CHECK(rep.mean_shading.lmse == Catch::Approx(0.1));
}
