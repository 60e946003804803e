#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "flan/checkpoint.hpp"
#include "flan/errors.hpp"
#include "flan/matrix.hpp"
#include "flan/model.hpp"
#include "flan/rng.hpp"

using namespace flan;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/flan_ckpt_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FlanModel sample_model(std::uint64_t seed, Sharing sharing = Sharing::Distinct) {
    Rng rng(seed);
    EncoderSpec enc;
    enc.latent_dim = 3;
    enc.hidden_sizes = {4};
    enc.sharing = sharing;
    if (sharing == Sharing::SharedWithPositionalCode) enc.positional_code_dim = 2;
    return FlanModel::build(FeaturePartition::per_column(3), enc, {4}, true,
                            Activation::Tanh, OutputKind::BinaryLogit, 1, rng);
}

std::vector<double> snapshot(const FlanModel& m) {
    std::vector<double> out;
    for (const Matrix* p : m.parameters()) {
        out.insert(out.end(), p->data.begin(), p->data.end());
    }
    return out;
}

}  // namespace

TEST_CASE("save then load preserves every parameter bit") {
    FlanModel m = sample_model(1);
    TempFile f("round.flan");
    save_checkpoint(f.path, m, "deadbeefdeadbeef");
    const LoadedCheckpoint lc = load_checkpoint(f.path);
    CHECK(lc.config_hash == "deadbeefdeadbeef");
    CHECK(snapshot(lc.model) == snapshot(m));
    CHECK(lc.model.n_groups() == 3);
    CHECK(lc.model.latent_dim() == 3);

    // The loaded model computes identical outputs.
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix x = Matrix::random_uniform(1, 3, -2, 2, rng);
        CHECK(bit_equal(lc.model.forward(x).first, m.forward(x).first));
    }
}

TEST_CASE("a second save of the loaded model is byte-identical") {
    FlanModel m = sample_model(3);
    TempFile a("a.flan"), b("b.flan");
    save_checkpoint(a.path, m, "0123456789abcdef");
    const LoadedCheckpoint lc = load_checkpoint(a.path);
    save_checkpoint(b.path, lc.model, lc.config_hash);
    CHECK(slurp(a.path) == slurp(b.path));
    CHECK_FALSE(slurp(a.path).empty());
}

TEST_CASE("shared-encoder models round-trip including positional codes") {
    FlanModel m = sample_model(4, Sharing::SharedWithPositionalCode);
    TempFile f("shared.flan");
    save_checkpoint(f.path, m, "feedfacefeedface");
    const LoadedCheckpoint lc = load_checkpoint(f.path);
    CHECK(snapshot(lc.model) == snapshot(m));
    REQUIRE(lc.model.positional_codes().size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(bit_equal(lc.model.positional_codes()[i], m.positional_codes()[i]));
    }
    Rng rng(5);
    const Matrix x = Matrix::random_uniform(1, 3, -2, 2, rng);
    CHECK(bit_equal(lc.model.forward(x).first, m.forward(x).first));
}

TEST_CASE("the header starts with the magic and version") {
    FlanModel m = sample_model(6);
    TempFile f("magic.flan");
    save_checkpoint(f.path, m, "0000000000000000");
    const std::string bytes = slurp(f.path);
    REQUIRE(bytes.size() > 5);
    CHECK(bytes.substr(0, 4) == "FLAN");
    CHECK(static_cast<unsigned char>(bytes[4]) == kCheckpointVersion);
}

TEST_CASE("corrupted files are rejected with io errors") {
    FlanModel m = sample_model(7);
    TempFile f("corrupt.flan");
    save_checkpoint(f.path, m, "1111111111111111");
    const std::string good = slurp(f.path);

    // Truncated payload.
    spit(f.path, good.substr(0, good.size() - 3));
    CHECK_THROWS_AS(load_checkpoint(f.path), IoError);

    // Trailing junk.
    spit(f.path, good + "xx");
    CHECK_THROWS_AS(load_checkpoint(f.path), IoError);

    // Wrong magic.
    std::string bad_magic = good;
    bad_magic[0] = 'G';
    spit(f.path, bad_magic);
    CHECK_THROWS_AS(load_checkpoint(f.path), IoError);

    // Unsupported version byte.
    std::string bad_version = good;
    bad_version[4] = 99;
    spit(f.path, bad_version);
    CHECK_THROWS_AS(load_checkpoint(f.path), IoError);

    // Garbage header line.
    const std::size_t nl = good.find('\n', 5);
    REQUIRE(nl != std::string::npos);
    std::string bad_header = good.substr(0, 5) + "{not json" + good.substr(nl);
    spit(f.path, bad_header);
    CHECK_THROWS_AS(load_checkpoint(f.path), IoError);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/nope.flan"), IoError);
}
