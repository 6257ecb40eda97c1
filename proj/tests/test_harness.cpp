#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bast/experiment.hpp"

using namespace bast;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    fs::path dir = fs::temp_directory_path() / "bast_harness_test";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("IDX pair round-trips through save_idx/load_idx") {
    Dataset data = make_synthetic_dataset(50, 4, 8, 8, 123);
    fs::path dir = test_dir();
    std::string img = (dir / "t-images.idx").string();
    std::string lab = (dir / "t-labels.idx").string();
    save_idx(data, img, lab);

    Dataset loaded = load_idx(img, lab);
    REQUIRE(loaded.size() == 50);
    CHECK(loaded.num_classes == 4);
    CHECK(loaded.images[0].shape == std::vector<std::size_t>{1, 8, 8});
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded.labels[i] == data.labels[i]);
        // 8-bit quantization on save
        CHECK(linf_distance(loaded.images[i], data.images[i]) <= 0.5 / 255.0 + 1e-12);
    }
}

TEST_CASE("IDX loader validates magics and reports truncation") {
    fs::path dir = test_dir();
    Dataset data = make_synthetic_dataset(10, 3, 6, 6, 1);
    std::string img = (dir / "v-images.idx").string();
    std::string lab = (dir / "v-labels.idx").string();
    save_idx(data, img, lab);

    SUBCASE("bad image magic") {
        std::ifstream in(img, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        bytes[3] = 0x01;
        std::string bad = (dir / "bad-images.idx").string();
        std::ofstream(bad, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_WITH_AS(load_idx(bad, lab), doctest::Contains("magic"), std::runtime_error);
    }
    SUBCASE("truncated image payload") {
        std::ifstream in(img, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() - 10);
        std::string bad = (dir / "trunc-images.idx").string();
        std::ofstream(bad, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_WITH_AS(load_idx(bad, lab), doctest::Contains("truncated"), std::runtime_error);
    }
    SUBCASE("count mismatch between pair") {
        Dataset small = make_synthetic_dataset(5, 3, 6, 6, 2);
        std::string lab2 = (dir / "short-labels.idx").string();
        std::string img2 = (dir / "short-images.idx").string();
        save_idx(small, img2, lab2);
        CHECK_THROWS_WITH_AS(load_idx(img, lab2), doctest::Contains("mismatch"), std::runtime_error);
    }
}

TEST_CASE("CSV rows are label plus row-major 0-255 pixels") {
    fs::path dir = test_dir();
    std::string path = (dir / "data.csv").string();
    {
        std::ofstream out(path);
        out << "2,0,255,128,64\n";
        out << "0,255,255,0,0\n";
    }
    Dataset data = load_csv(path, 1, 2, 2);
    REQUIRE(data.size() == 2);
    CHECK(data.labels[0] == 2);
    CHECK(data.images[0].data[0] == doctest::Approx(0.0));
    CHECK(data.images[0].data[1] == doctest::Approx(1.0));
    CHECK(data.images[0].data[3] == doctest::Approx(64.0 / 255.0));

    std::string bad = (dir / "bad.csv").string();
    std::ofstream(bad) << "1,0,0,0\n";  // one pixel short
    CHECK_THROWS_WITH_AS(load_csv(bad, 1, 2, 2), doctest::Contains("expected"), std::runtime_error);
}

TEST_CASE("BASTIMG1 tensors round-trip exactly; PGM previews are well-formed") {
    fs::path dir = test_dir();
    Dataset data = make_synthetic_dataset(1, 3, 7, 9, 5);
    std::string path = (dir / "img.bimg").string();
    save_tensor_image(data.images[0], path);
    Tensor back = load_tensor_image(path);
    CHECK(back.shape == data.images[0].shape);
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == data.images[0][i]);

    std::string trash = (dir / "trash.bimg").string();
    std::ofstream(trash, std::ios::binary) << "NOTMAGIC";
    CHECK_THROWS(load_tensor_image(trash));

    std::string pgm = (dir / "img.pgm").string();
    save_pgm(data.images[0], pgm);
    std::ifstream in(pgm, std::ios::binary);
    std::string header;
    in >> header;
    CHECK(header == "P5");
}

TEST_CASE("select_targets: forced two-class, deterministic, chi-square uniform") {
    std::vector<int> y_true(100, 0);
    auto two = select_targets(y_true, 2, 9);
    for (int t : two) CHECK(t == 1);

    std::vector<int> mixed(10000);
    for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = static_cast<int>(i % 10);
    auto a = select_targets(mixed, 10, 77);
    auto b = select_targets(mixed, 10, 77);
    CHECK(a == b);
    for (std::size_t i = 0; i < mixed.size(); ++i) CHECK(a[i] != mixed[i]);

    // chi-square over the 9 non-true classes for a fixed true label
    std::vector<int> same(10000, 3);
    auto t = select_targets(same, 10, 42);
    std::vector<int> counts(10, 0);
    for (int v : t) ++counts[static_cast<std::size_t>(v)];
    CHECK(counts[3] == 0);
    double expected = 10000.0 / 9.0, chi2 = 0.0;
    for (int k = 0; k < 10; ++k) {
        if (k == 3) continue;
        double d = counts[static_cast<std::size_t>(k)] - expected;
        chi2 += d * d / expected;
    }
    CHECK(chi2 < 20.09);  // chi-square(8 dof) critical value at p = 0.01

    CHECK_THROWS(select_targets(y_true, 1, 0));
}

TEST_CASE("filter_correct keeps exactly the images every model gets right") {
    Dataset data = make_synthetic_dataset(300, 4, 10, 10, 17);
    Classifier m = train(make_mlp("f", {1, 10, 10}, 24, 4, 3), data,
                         TrainConfig{10, 32, 0.5, 4, false, 0.0})
                       .model;
    EvalSet set = filter_correct({&m}, data);
    CHECK(set.size() > 0);
    CHECK(set.size() <= data.size());
    for (std::size_t i = 0; i < set.size(); ++i)
        CHECK(m.predict(set.images[i]) == set.y_true[i]);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (m.predict(data.images[i]) == data.labels[i]) ++correct;
    CHECK(set.size() == correct);
}

TEST_CASE("config parser: comments, overrides, roster, unknown keys") {
    auto kv = parse_config_text(
        "# experiment\n"
        "strategy = bast\n"
        "epsilon = 0.0627  # ~16/255\n"
        "m = 3\n"
        "model.0 = easy1 mlp easy whitebox\n"
        "model.1 = rob1 cnn robust whitebox adversarial\n");
    ExperimentConfig cfg = ExperimentConfig::from_map(kv);
    CHECK(cfg.strategy == "bast");
    CHECK(cfg.epsilon == doctest::Approx(0.0627));
    CHECK(cfg.m == 3);
    REQUIRE(cfg.models.size() == 2);
    CHECK(cfg.models[0].training == "normal");
    CHECK(cfg.models[1].training == "adversarial");
    cfg.validate();

    cfg.apply_overrides(parse_config_text("m = 1"));
    CHECK(cfg.m == 1);

    CHECK_THROWS(parse_config_text("no_equals_sign\n"));
    CHECK_THROWS(ExperimentConfig::from_map(parse_config_text("bogus_key = 1")));
    CHECK_THROWS(ExperimentConfig::from_map(parse_config_text("epsilon = abc")));

    ExperimentConfig invalid = cfg;
    invalid.update_rule = "nonsense";
    CHECK_THROWS(invalid.validate());
}

TEST_CASE("config validation enforces the BAST group requirement") {
    auto kv = parse_config_text(
        "strategy = bast\n"
        "model.0 = easy1 mlp easy whitebox\n");
    ExperimentConfig cfg = ExperimentConfig::from_map(kv);
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("robust"), std::runtime_error);
}
