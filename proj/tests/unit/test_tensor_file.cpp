// Named-tensor container and its binary file format: bit-exact round trips,
// deterministic bytes, content digests, and checkpoint save/load.
#include "doctest.h"

#include "streamdiar/model.hpp"
#include "streamdiar/rng.hpp"
#include "streamdiar/tensor_file.hpp"

#include "helpers.hpp"

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

using namespace streamdiar;
using testutil::random_matrix;

namespace {

// The same fold the library documents for manifests, recomputed from scratch.
std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

NamedTensors awkward_tensors(Rng& rng) {
    NamedTensors t;
    t.put("plain", random_matrix<float>(rng, 3, 4));
    MatrixF special(2, 3);
    special.at(0, 0) = 0.0f;
    special.at(0, 1) = -0.0f;
    special.at(0, 2) = std::numeric_limits<float>::infinity();
    special.at(1, 0) = -std::numeric_limits<float>::infinity();
    special.at(1, 1) = std::numeric_limits<float>::quiet_NaN();
    special.at(1, 2) = std::numeric_limits<float>::denorm_min();
    t.put("special", special);
    t.put("empty", MatrixF(3, 0));
    t.put_scalar("scalar", 2.75f);
    t.put("unicode.název", random_matrix<float>(rng, 1, 2));
    return t;
}

bool tensors_equal(const NamedTensors& a, const NamedTensors& b) {
    if (a.items.size() != b.items.size()) return false;
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        if (a.items[i].first != b.items[i].first) return false;
        if (!bitwise_equal(a.items[i].second, b.items[i].second)) return false;
    }
    return true;
}

} // namespace

TEST_SUITE("tensor_file") {

TEST_CASE("container lookup, overwrite, and scalar accessors") {
    NamedTensors t;
    CHECK(!t.contains("a"));
    t.put("a", MatrixF(2, 2, {1, 2, 3, 4}));
    CHECK(t.contains("a"));
    CHECK(t.get("a").at(1, 0) == 3.0f);

    t.put("a", MatrixF(1, 1, {9})); // same name replaces in place
    CHECK(t.items.size() == 1);
    CHECK(t.get("a").at(0, 0) == 9.0f);

    t.put_scalar("s", -1.5f);
    CHECK(t.get_scalar("s") == -1.5f);
    CHECK_THROWS_AS(t.get("missing"), std::runtime_error);
    CHECK(t.get_scalar("a") == 9.0f); // any single-value tensor reads as a scalar
    t.put("wide", MatrixF(1, 2, {1, 2}));
    CHECK_THROWS_AS(t.get_scalar("wide"), std::runtime_error);

    const NamedTensors& view = t;
    CHECK(view.get("a").at(0, 0) == 9.0f);
}

TEST_CASE("file round trip is bit-exact, including awkward values and order") {
    Rng rng(601);
    testutil::TempDir dir("tensor-roundtrip");
    NamedTensors t = awkward_tensors(rng);

    const std::string path = dir.file("pack.tnsr");
    save_tensors(path, t);
    NamedTensors back = load_tensors(path);
    CHECK(tensors_equal(t, back));

    // Saving the loaded copy reproduces the file byte for byte.
    const std::string again = dir.file("pack2.tnsr");
    save_tensors(again, back);
    CHECK(testutil::read_file(path) == testutil::read_file(again));

    SUBCASE("an empty pack survives too") {
        const std::string empty = dir.file("empty.tnsr");
        save_tensors(empty, NamedTensors{});
        CHECK(load_tensors(empty).items.empty());
    }
}

TEST_CASE("digest recomputes as plain FNV-1a and reacts to any byte change") {
    Rng rng(602);
    testutil::TempDir dir("tensor-digest");
    const std::string path = dir.file("pack.tnsr");
    NamedTensors t = awkward_tensors(rng);
    save_tensors(path, t);

    CHECK(file_digest(path) == fnv1a(testutil::read_file(path)));

    const std::string same = dir.file("same.tnsr");
    save_tensors(same, t);
    CHECK(file_digest(same) == file_digest(path)); // deterministic bytes

    Rng rng2(602);
    NamedTensors tweaked = awkward_tensors(rng2);
    tweaked.get("plain").at(2, 3) += 1.0f;
    const std::string other = dir.file("other.tnsr");
    save_tensors(other, tweaked);
    CHECK(file_digest(other) != file_digest(path));

    CHECK_THROWS_AS(file_digest(dir.file("nope.tnsr")), std::runtime_error);
}

TEST_CASE("malformed files are rejected with specific complaints") {
    Rng rng(603);
    testutil::TempDir dir("tensor-malformed");
    const std::string good = dir.file("good.tnsr");
    save_tensors(good, awkward_tensors(rng));
    const std::string bytes = testutil::read_file(good);

    auto write_file = [&](const std::string& name, const std::string& content) {
        const std::string p = dir.file(name);
        std::ofstream os(p, std::ios::binary);
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.close();
        return p;
    };

    CHECK_THROWS_AS(load_tensors(dir.file("missing.tnsr")), std::runtime_error);

    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(load_tensors(write_file("magic.tnsr", magic)), std::runtime_error);

    CHECK_THROWS_AS(load_tensors(write_file("cut.tnsr", bytes.substr(0, bytes.size() / 2))),
                    std::runtime_error);

    // Patch the first record's rank field (magic + count + name length + name).
    std::string rank = bytes;
    const std::size_t name_len = 5; // "plain"
    const std::size_t rank_at = 8 + 4 + 4 + name_len;
    rank[rank_at] = 3;
    CHECK_THROWS_AS(load_tensors(write_file("rank.tnsr", rank)), std::runtime_error);
}

TEST_CASE("checkpoints restore every tensor bit for bit") {
    Rng rng(604);
    EncoderConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.input_dim = 6;
    cfg.block_frames = 4;
    cfg.context_blocks = 1;
    cfg.validate();
    ModelParamsF params = ModelParamsF::init(cfg, rng.next_u64());

    testutil::TempDir dir("checkpoint");
    const std::string path = dir.file("model.ckpt");
    save_checkpoint(path, params);
    ModelParamsF back = load_checkpoint(path);

    REQUIRE(back.tensors.size() == params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        CHECK(back.tensors[i].first == params.tensors[i].first);
        CHECK(bitwise_equal(back.tensors[i].second, params.tensors[i].second));
    }
    CHECK(back.config.n_layers == cfg.n_layers);
    CHECK(back.config.d_model == cfg.d_model);
    CHECK(back.config.n_heads == cfg.n_heads);
    CHECK(back.config.d_ff == cfg.d_ff);
    CHECK(back.config.input_dim == cfg.input_dim);
    // The block size and left context are run-time settings, not part of the
    // stored architecture; a loaded model starts from the defaults.
    CHECK(back.config.block_frames == EncoderConfig{}.block_frames);
    CHECK(back.config.context_blocks == EncoderConfig{}.context_blocks);

    // Save -> load -> save reproduces identical bytes.
    const std::string second = dir.file("model2.ckpt");
    save_checkpoint(second, back);
    CHECK(testutil::read_file(path) == testutil::read_file(second));

    SUBCASE("tensor packs with wrong metadata are rejected") {
        NamedTensors t = params_to_tensors(params);
        t.get("meta.hparams") = MatrixF(1, 4, {2, 8, 2, 16});
        CHECK_THROWS_AS(params_from_tensors(t), std::runtime_error);

        NamedTensors t2 = params_to_tensors(params);
        t2.get("proj.w") = MatrixF(1, 1, {0});
        CHECK_THROWS_AS(params_from_tensors(t2), std::runtime_error);

        NamedTensors t3 = params_to_tensors(params);
        t3.items.erase(t3.items.begin() + 1); // drop a parameter tensor
        CHECK_THROWS_AS(params_from_tensors(t3), std::runtime_error);
    }
}

} // TEST_SUITE("tensor_file")
