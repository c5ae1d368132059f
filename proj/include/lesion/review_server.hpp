#pragma once

// HTTP surface of a review session. JSON bodies everywhere except the PNG
// image, mask and overlay routes; errors are {"code", "message"}.
//
//   GET  /api/items            every manifest entry with its decision state
//   GET  /api/progress         decided / total and per-verdict counts
//   GET  /api/image/{id}       source image as PNG
//   GET  /api/mask/{id}        effective mask as PNG (0/255)
//   GET  /api/overlay/{id}     image with the mask blended 40% red
//   POST /api/decision         {"imageId", "verdict", "reviewer"}
//   GET  /                     static UI bundle, when a directory is given

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "lesion/review.hpp"

namespace lesion::review {

/// Mask pixels become 0.6 * pixel + 0.4 * pure red, rounded.
ImageRGB overlay(const ImageRGB& image, const BitMask& mask);

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8080;
  std::filesystem::path static_dir;
};

class ReviewServer {
 public:
  ReviewServer(ReviewStore& store, ServerOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Takes the review lock, binds and serves on a background thread.
  /// Throws StartupError when the port or the lock is unavailable.
  int start();
  void stop();
  int port() const noexcept { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace lesion::review
