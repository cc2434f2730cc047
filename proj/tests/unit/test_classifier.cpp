#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "virlab/classifier.hpp"
#include "virlab/error.hpp"

using namespace virlab;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("virlab_test_" + name);
}

}  // namespace

TEST_CASE("parameter count of a 784-128-10 network") {
    const auto model = init_classifier(Architecture{{784, 128, 10}}, 0);
    CHECK(model.parameter_count() == 101770);
    CHECK(model.parameters().size() == 4);
    CHECK(model.parameter("fc0.weight").shape() == Shape{784, 128});
    CHECK(model.parameter("fc1.bias").shape() == Shape{10});
}

TEST_CASE("initialization is seeded and scaled by fan-in") {
    const Architecture arch{{16, 8, 3}};
    const auto a = init_classifier(arch, 5), b = init_classifier(arch, 5), c = init_classifier(arch, 6);
    const auto wa = a.parameter("fc0.weight").data();
    const auto wb = b.parameter("fc0.weight").data();
    const auto wc = c.parameter("fc0.weight").data();
    CHECK(std::equal(wa.begin(), wa.end(), wb.begin()));
    CHECK_FALSE(std::equal(wa.begin(), wa.end(), wc.begin()));
    for (double v : wa) CHECK(std::abs(v) <= 0.25);
    for (double v : a.parameter("fc0.bias").data()) CHECK(v == 0.0);
}

TEST_CASE("invalid architectures are rejected") {
    CHECK_THROWS_AS(init_classifier(Architecture{{}}, 0), ConfigError);
    CHECK_THROWS_AS(init_classifier(Architecture{{4}}, 0), ConfigError);
    CHECK_THROWS_AS(init_classifier(Architecture{{4, 0, 2}}, 0), ConfigError);
}

TEST_CASE("forward of a hand-built network") {
    // 2 -> 2 (ReLU) -> 2
    const auto model = make_classifier(Architecture{{2, 2, 2}}, {{1.0, 0.0, 0.0, -1.0}, {1.0, 0.0, 0.0, 1.0}},
                                       {{0.0, 0.0}, {0.5, 0.0}});
    const Tensor z = model.forward(Tensor({2, 2}, {1.0, 2.0, -1.0, -3.0}));
    CHECK(z.at(0, 0) == 1.5);
    CHECK(z.at(0, 1) == 0.0);
    CHECK(z.at(1, 0) == 0.5);
    CHECK(z.at(1, 1) == 3.0);
    CHECK(model.predict(Tensor({1, 2}, {-1.0, -3.0}))[0] == 1);
    CHECK_THROWS_AS(model.forward(Tensor({1, 3}, {0.0, 0.0, 0.0})), ShapeError);
}

TEST_CASE("vulnerability ranking is ascending in true-class probability") {
    const std::vector<double> p{0.9, 0.1, 0.5, 0.1};
    const auto r = vulnerability_ranking(p);
    CHECK(r == std::vector<std::size_t>{1, 3, 2, 0});
    const auto model = init_classifier(Architecture{{3, 4, 2}}, 1);
    const Tensor x({2, 3}, {0.1, 0.2, 0.3, -0.4, 0.5, 0.6});
    const auto probs = true_class_probs(model, x, std::vector<int>{0, 1});
    CHECK(probs[0] == doctest::Approx(true_class_prob(model, x.row(0), 0)));
    CHECK(probs[1] == doctest::Approx(true_class_prob(model, x.row(1), 1)));
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto model = init_classifier(Architecture{{5, 7, 3}}, 11);
    const auto path = temp_file("roundtrip.ckpt");
    save_checkpoint(model, path, 12, "state");
    const auto ck = load_checkpoint(path);
    CHECK(ck.epoch == 12);
    CHECK(ck.rng_state == "state");
    CHECK(ck.model.arch() == model.arch());
    const Tensor x({2, 5}, {0.1, 0.2, 0.3, 0.4, 0.5, -1.0, 2.0, 0.0, 0.3, 0.9});
    const Tensor ta = model.forward(x);
    const auto a = ta.data();
    const Tensor tb = ck.model.forward(x);
    const auto b = tb.data();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint size follows the layout") {
    const auto model = init_classifier(Architecture{{4, 3, 2}}, 0);
    const auto bytes = encode_checkpoint(model, 0, {});
    // magic + header length + header, then per parameter name length, name, rank, dims, payload; then CRC32.
    std::uint64_t header_len = 0;
    for (int i = 0; i < 8; ++i) header_len |= static_cast<std::uint64_t>(bytes[8 + static_cast<std::size_t>(i)]) << (8 * i);
    std::size_t expected = 8 + 8 + header_len + 4;
    for (const auto& p : model.parameters()) expected += 8 + p.name.size() + 8 + 8 * p.value.rank() + 8 * p.value.numel();
    CHECK(bytes.size() == expected);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "VIRCKPT1");
}

TEST_CASE("corrupted or truncated checkpoints are rejected") {
    const auto model = init_classifier(Architecture{{4, 3, 2}}, 0);
    auto bytes = encode_checkpoint(model, 0, {});
    CHECK_NOTHROW(decode_checkpoint(bytes));
    auto truncated = bytes;
    truncated.resize(bytes.size() - 10);
    CHECK_THROWS_AS(decode_checkpoint(truncated), IoError);
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    CHECK_THROWS_AS(decode_checkpoint(flipped), IoError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), IoError);
    CHECK_THROWS_AS(load_checkpoint(temp_file("does_not_exist.ckpt")), IoError);
}
