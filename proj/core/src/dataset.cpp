#include "dafar/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "dafar/errors.hpp"

namespace dafar {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw FileMissingError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

uint32_t be32(const unsigned char* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline float to_pixel(unsigned char v) { return static_cast<float>(v) / 127.5f - 1.0f; }

ImageBatch load_mnist(Split split, const std::filesystem::path& root) {
    const std::string stem = split == Split::train ? "train" : "t10k";
    const auto img_path = root / "mnist" / (stem + "-images-idx3-ubyte");
    const auto lab_path = root / "mnist" / (stem + "-labels-idx1-ubyte");

    auto img = read_file(img_path);
    auto lab = read_file(lab_path);
    if (img.size() < 16) throw TruncatedRecordError("IDX image header short: " + img_path.string());
    if (lab.size() < 8) throw TruncatedRecordError("IDX label header short: " + lab_path.string());
    if (be32(img.data()) != 0x00000803u)
        throw BadMagicError("bad IDX image magic in " + img_path.string());
    if (be32(lab.data()) != 0x00000801u)
        throw BadMagicError("bad IDX label magic in " + lab_path.string());

    const uint32_t n = be32(img.data() + 4);
    const uint32_t rows = be32(img.data() + 8);
    const uint32_t cols = be32(img.data() + 12);
    const uint32_t nl = be32(lab.data() + 4);
    if (rows != 28 || cols != 28)
        throw BadMagicError("unexpected MNIST geometry " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    if (nl != n) throw TruncatedRecordError("MNIST image/label count mismatch");
    if (img.size() != 16 + size_t(n) * rows * cols)
        throw TruncatedRecordError("IDX image payload truncated: " + img_path.string());
    if (lab.size() != 8 + size_t(n))
        throw TruncatedRecordError("IDX label payload truncated: " + lab_path.string());

    ImageBatch b;
    b.pixels = Tensor({int64_t(n), 1, 28, 28});
    b.labels.resize(n);
    const unsigned char* px = img.data() + 16;
    for (size_t i = 0; i < size_t(n) * 784; ++i) b.pixels.data[i] = to_pixel(px[i]);
    for (uint32_t i = 0; i < n; ++i) {
        b.labels[i] = lab[8 + i];
        if (b.labels[i] > 9) throw TruncatedRecordError("MNIST label out of range");
    }
    return b;
}

ImageBatch load_cifar10(Split split, const std::filesystem::path& root) {
    std::vector<std::filesystem::path> files;
    const auto dir = root / "cifar-10-batches-bin";
    if (split == Split::train) {
        for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
        files.push_back(dir / "test_batch.bin");
    }

    constexpr size_t kRecord = 3073;
    ImageBatch b;
    std::vector<float> pix;
    for (const auto& f : files) {
        auto bytes = read_file(f);
        if (bytes.empty() || bytes.size() % kRecord != 0)
            throw TruncatedRecordError("CIFAR batch not a multiple of 3073 bytes: " + f.string());
        const size_t n = bytes.size() / kRecord;
        for (size_t r = 0; r < n; ++r) {
            const unsigned char* rec = bytes.data() + r * kRecord;
            if (rec[0] > 9)
                throw TruncatedRecordError("CIFAR label out of range in " + f.string());
            b.labels.push_back(rec[0]);
            for (size_t i = 0; i < 3072; ++i) pix.push_back(to_pixel(rec[1 + i]));
        }
    }
    const int64_t n = static_cast<int64_t>(b.labels.size());
    b.pixels = Tensor({n, 3, 32, 32});
    b.pixels.data = std::move(pix);
    return b;
}

}  // namespace

const char* to_string(DatasetName d) { return d == DatasetName::mnist ? "mnist" : "cifar10"; }
const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

DatasetName dataset_from_string(const std::string& s) {
    if (s == "mnist") return DatasetName::mnist;
    if (s == "cifar10" || s == "cifar-10") return DatasetName::cifar10;
    throw ConfigError("unknown dataset: " + s);
}

void ImageBatch::validate() const {
    if (pixels.rank() != 4) throw ShapeMismatchError("ImageBatch pixels must be rank 4");
    if (static_cast<int64_t>(labels.size()) != pixels.batch())
        throw ShapeMismatchError("ImageBatch labels length != batch size");
    const bool mnist_shape = pixels.shape[1] == 1 && pixels.shape[2] == 28 && pixels.shape[3] == 28;
    const bool cifar_shape = pixels.shape[1] == 3 && pixels.shape[2] == 32 && pixels.shape[3] == 32;
    if (!mnist_shape && !cifar_shape)
        throw ShapeMismatchError("ImageBatch shape " + pixels.shape_str() +
                                 " is neither (.,1,28,28) nor (.,3,32,32)");
    for (float v : pixels.data)
        if (!std::isfinite(v) || v < -1.0f || v > 1.0f)
            throw ShapeMismatchError("ImageBatch pixel outside [-1,1]");
    for (int l : labels)
        if (l < 0 || l > 9) throw ShapeMismatchError("ImageBatch label outside [0,9]");
}

ImageBatch ImageBatch::slice(int64_t start, int64_t count) const {
    std::vector<int64_t> idx(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) idx[static_cast<size_t>(i)] = start + i;
    return select(idx);
}

ImageBatch ImageBatch::select(const std::vector<int64_t>& indices) const {
    ImageBatch out;
    auto shp = pixels.shape;
    shp[0] = static_cast<int64_t>(indices.size());
    out.pixels = Tensor(shp);
    out.labels.resize(indices.size());
    const int64_t ss = pixels.sample_size();
    for (size_t i = 0; i < indices.size(); ++i) {
        std::memcpy(out.pixels.sample(static_cast<int64_t>(i)), pixels.sample(indices[i]),
                    sizeof(float) * static_cast<size_t>(ss));
        out.labels[i] = labels[static_cast<size_t>(indices[i])];
    }
    return out;
}

ImageBatch ImageBatch::concat(const ImageBatch& other) const {
    if (pixels.sample_size() != other.pixels.sample_size())
        throw ShapeMismatchError("concat: sample shapes differ");
    ImageBatch out;
    auto shp = pixels.shape;
    shp[0] = pixels.batch() + other.pixels.batch();
    out.pixels = Tensor(shp);
    std::memcpy(out.pixels.data.data(), pixels.data.data(), sizeof(float) * pixels.data.size());
    std::memcpy(out.pixels.data.data() + pixels.data.size(), other.pixels.data.data(),
                sizeof(float) * other.pixels.data.size());
    out.labels = labels;
    out.labels.insert(out.labels.end(), other.labels.begin(), other.labels.end());
    return out;
}

ImageBatch load_dataset(DatasetName name, Split split, const std::filesystem::path& root) {
    ImageBatch b = name == DatasetName::mnist ? load_mnist(split, root) : load_cifar10(split, root);
    b.validate();
    return b;
}

uint64_t fnv1a(const void* data, size_t n, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t dataset_file_hash(DatasetName name, Split split, const std::filesystem::path& root) {
    std::vector<std::filesystem::path> files;
    if (name == DatasetName::mnist) {
        const std::string stem = split == Split::train ? "train" : "t10k";
        files = {root / "mnist" / (stem + "-images-idx3-ubyte"),
                 root / "mnist" / (stem + "-labels-idx1-ubyte")};
    } else {
        const auto dir = root / "cifar-10-batches-bin";
        if (split == Split::train)
            for (int i = 1; i <= 5; ++i)
                files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
        else
            files.push_back(dir / "test_batch.bin");
    }
    uint64_t h = 1469598103934665603ULL;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw FileMissingError("cannot open " + f.string());
        char buf[1 << 16];
        while (in) {
            in.read(buf, sizeof(buf));
            h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
        }
    }
    return h;
}

}  // namespace dafar
