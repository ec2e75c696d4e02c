#include "saplma/hash.hpp"

#include <array>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

#include "saplma/error.hpp"

namespace saplma {

namespace {

struct DigestCtx {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

  DigestCtx() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
      fail(ErrorKind::io, "sha256: digest initialisation failed");
    }
  }

  void update(const void* data, std::size_t len) { EVP_DigestUpdate(ctx.get(), data, len); }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), out.data(), &len);
    static constexpr char digits[] = "0123456789abcdef";
    std::string text;
    text.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
      text.push_back(digits[out[i] >> 4]);
      text.push_back(digits[out[i] & 0xf]);
    }
    return text;
  }
};

} // namespace

std::string sha256_hex(std::string_view bytes) {
  DigestCtx d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorKind::io, "cannot open " + path.string());
  }
  DigestCtx d;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return d.hex();
}

} // namespace saplma
