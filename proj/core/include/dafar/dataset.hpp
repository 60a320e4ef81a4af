#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dafar/tensor.hpp"

namespace dafar {

enum class DatasetName { mnist, cifar10 };
enum class Split { train, test };

const char* to_string(DatasetName d);
const char* to_string(Split s);
DatasetName dataset_from_string(const std::string& s);

// Normalized image batch: pixels in [-1, 1], NCHW, integer labels in [0, 9].
struct ImageBatch {
    Tensor pixels;
    std::vector<int> labels;

    int64_t size() const { return pixels.batch(); }

    // throws on any violated invariant (range, finiteness, label count)
    void validate() const;

    ImageBatch slice(int64_t start, int64_t count) const;
    ImageBatch select(const std::vector<int64_t>& indices) const;
    ImageBatch concat(const ImageBatch& other) const;
};

// Reads the raw binary files:
//   MNIST IDX:  <root>/mnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte
//               big-endian magic 0x00000803 (images) / 0x00000801 (labels)
//   CIFAR-10:   <root>/cifar-10-batches-bin/{data_batch_1..5,test_batch}.bin
//               3073-byte records, 1 label byte + 3072 pixel bytes
// Bytes are mapped to [-1, 1] via v / 127.5 - 1. Ordering is the file order.
ImageBatch load_dataset(DatasetName name, Split split, const std::filesystem::path& root);

// FNV-1a over the raw dataset files, for manifests
uint64_t dataset_file_hash(DatasetName name, Split split, const std::filesystem::path& root);

uint64_t fnv1a(const void* data, size_t n, uint64_t seed = 1469598103934665603ULL);

}  // namespace dafar
