#include "bast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace bast {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::istream& in, const std::string& path, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(path + ": truncated while reading " + what + " at byte offset " +
                                 std::to_string(in.tellg() == -1 ? 0 : static_cast<long>(in.tellg())));
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

int max_label_plus_one(const std::vector<int>& labels) {
    int k = 0;
    for (int y : labels) k = std::max(k, y + 1);
    return k;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, int num_classes) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("cannot open: " + images_path);
    if (std::uint32_t magic = read_u32_be(img, images_path, "magic"); magic != kIdxImagesMagic)
        throw std::runtime_error(images_path + ": bad IDX image magic 0x" +
                                 [&] { std::ostringstream o; o << std::hex << magic; return o.str(); }());
    std::uint32_t n = read_u32_be(img, images_path, "count");
    std::uint32_t h = read_u32_be(img, images_path, "height");
    std::uint32_t w = read_u32_be(img, images_path, "width");

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("cannot open: " + labels_path);
    if (std::uint32_t magic = read_u32_be(lab, labels_path, "magic"); magic != kIdxLabelsMagic)
        throw std::runtime_error(labels_path + ": bad IDX label magic");
    std::uint32_t ln = read_u32_be(lab, labels_path, "count");
    if (ln != n)
        throw std::runtime_error("IDX pair mismatch: " + std::to_string(n) + " images vs " +
                                 std::to_string(ln) + " labels");

    Dataset data;
    std::vector<unsigned char> row(static_cast<std::size_t>(h) * w);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!img.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size())))
            throw std::runtime_error(images_path + ": truncated, expected " +
                                     std::to_string(16 + static_cast<std::size_t>(n) * h * w) +
                                     " bytes, image " + std::to_string(i) + " incomplete");
        Tensor t = Tensor::zeros({1, h, w});
        for (std::size_t k = 0; k < row.size(); ++k) t.data[k] = row[k] / 255.0;
        int y = lab.get();
        if (y == EOF)
            throw std::runtime_error(labels_path + ": truncated, expected " + std::to_string(8 + n) +
                                     " bytes, label " + std::to_string(i) + " missing");
        data.images.push_back(std::move(t));
        data.labels.push_back(y);
    }
    data.num_classes = num_classes > 0 ? num_classes : max_label_plus_one(data.labels);
    return data;
}

void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path) {
    if (data.size() == 0) throw std::invalid_argument("save_idx: empty dataset");
    std::size_t h = data.images[0].shape[1], w = data.images[0].shape[2];
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("cannot open for writing: " + images_path);
    write_u32_be(img, kIdxImagesMagic);
    write_u32_be(img, static_cast<std::uint32_t>(data.size()));
    write_u32_be(img, static_cast<std::uint32_t>(h));
    write_u32_be(img, static_cast<std::uint32_t>(w));
    for (const Tensor& t : data.images)
        for (double v : t.data)
            img.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("cannot open for writing: " + labels_path);
    write_u32_be(lab, kIdxLabelsMagic);
    write_u32_be(lab, static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

Dataset load_csv(const std::string& path, std::size_t channels, std::size_t height,
                 std::size_t width, int num_classes) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::size_t expected = channels * height * width;
    Dataset data;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        if (!std::getline(row, cell, ','))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing label");
        int y = std::stoi(cell);
        Tensor t = Tensor::zeros({channels, height, width});
        std::size_t k = 0;
        while (std::getline(row, cell, ',')) {
            if (k >= expected)
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": row too long, expected " +
                                         std::to_string(expected) + " pixels");
            t.data[k++] = std::stod(cell) / 255.0;
        }
        if (k != expected)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": row has " +
                                     std::to_string(k) + " pixels, expected " + std::to_string(expected));
        data.images.push_back(std::move(t));
        data.labels.push_back(y);
    }
    if (data.size() == 0) throw std::runtime_error(path + ": no rows");
    data.num_classes = num_classes > 0 ? num_classes : max_label_plus_one(data.labels);
    return data;
}

Dataset make_synthetic_dataset(std::size_t count, int num_classes, std::size_t height,
                               std::size_t width, std::uint64_t seed, double noise) {
    if (num_classes < 2) throw std::invalid_argument("make_synthetic_dataset: need >= 2 classes");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> label_dist(0, num_classes - 1);
    std::uniform_real_distribution<double> amp_dist(0.7, 1.0);
    std::normal_distribution<double> noise_dist(0.0, noise);

    Dataset data;
    data.num_classes = num_classes;
    // Two class-coded signals per image:
    //  - a robust one: a sinusoid whose phase falls inside the class's bin
    //    of the phase circle, with the position inside the bin and the
    //    grating orientation drawn per image. Its amplitude is well
    //    above the attack budgets studied here, but adjacent bins touch, so
    //    pushing an image into a *neighboring* class stays cheap while
    //    reaching an arbitrary class requires a large rotation. The random
    //    orientation makes the phase expensive to decode, so it is a
    //    shortcut-unfriendly feature.
    //  - a brittle one: a per-class pseudo-random pixel marker whose
    //    amplitude sits below those budgets. It is the most reliable cheap
    //    clean feature, so shortcut-prone models lean on it and inherit its
    //    brittleness; adversarial training sees it destroyed and must fall
    //    back on the sinusoid.
    const double freq = 2.0;
    const double amplitude = 0.16;
    const double marker = 0.06;
    std::uniform_real_distribution<double> ori_dist(0.0, M_PI);
    std::uniform_real_distribution<double> jitter_dist(-0.5, 0.5);
    auto marker_sign = [width](int label, std::size_t i, std::size_t j) {
        std::uint64_t z = static_cast<std::uint64_t>(label) * 0x9e3779b97f4a7c15ULL +
                          (i * width + j + 1) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 30)) * 0x94d049bb133111ebULL;
        z = (z ^ (z >> 27)) * 0x2545f4914f6cdd1dULL;
        return (z >> 63) ? 1.0 : -1.0;
    };
    for (std::size_t idx = 0; idx < count; ++idx) {
        int y = label_dist(rng);
        double bin = 2.0 * M_PI / static_cast<double>(num_classes);
        double phase0 = bin * (static_cast<double>(y) + jitter_dist(rng));
        double theta = ori_dist(rng);
        double a = amp_dist(rng);
        Tensor t = Tensor::zeros({1, height, width});
        for (std::size_t i = 0; i < height; ++i)
            for (std::size_t j = 0; j < width; ++j) {
                double phase = 2.0 * M_PI * freq *
                                   (std::cos(theta) * static_cast<double>(i) +
                                    std::sin(theta) * static_cast<double>(j)) /
                                   static_cast<double>(height) +
                               phase0;
                double v = 0.5 + amplitude * a * std::cos(phase) +
                           marker * marker_sign(y, i, j) + noise_dist(rng);
                t.at3(0, i, j) = std::clamp(v, 0.0, 1.0);
            }
        data.images.push_back(std::move(t));
        data.labels.push_back(y);
    }
    return data;
}

namespace {
constexpr char kImgMagic[8] = {'B', 'A', 'S', 'T', 'I', 'M', 'G', '1'};

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(path + ": truncated tensor file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void save_tensor_image(const Tensor& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(kImgMagic, 8);
    out.put(static_cast<char>(t.shape.size()));
    for (std::size_t d : t.shape) write_u32_le(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

Tensor load_tensor_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kImgMagic, 8) != 0)
        throw std::runtime_error(path + ": bad BASTIMG1 magic");
    int ndim = in.get();
    if (ndim == EOF || ndim < 1) throw std::runtime_error(path + ": bad tensor rank");
    std::vector<std::size_t> shape;
    for (int i = 0; i < ndim; ++i) shape.push_back(read_u32_le(in, path));
    std::vector<double> data(shape_size(shape));
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double))))
        throw std::runtime_error(path + ": truncated tensor data");
    return Tensor(std::move(shape), std::move(data));
}

void save_pgm(const Tensor& image, const std::string& path) {
    if (image.shape.size() != 3) throw std::invalid_argument("save_pgm: expected [C,H,W]");
    std::size_t h = image.shape[1], w = image.shape[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
            out.put(static_cast<char>(static_cast<unsigned char>(
                std::lround(std::clamp(image.at3(0, i, j), 0.0, 1.0) * 255.0))));
}

}  // namespace bast
