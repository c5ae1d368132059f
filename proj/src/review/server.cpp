#include "lesion/review_server.hpp"

#include <cmath>

#include <sys/socket.h>

#include "httplib.h"
#include "json.hpp"
#include "lesion/errors.hpp"
#include "lesion/image_io.hpp"

namespace lesion::review {

using nlohmann::json;

ImageRGB overlay(const ImageRGB& image, const BitMask& mask) {
  require_same_size(image, mask, "overlay");
  ImageRGB out = image;
  constexpr double kAlpha = 0.4;
  const double red[3] = {255.0, 0.0, 0.0};
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      if (!mask.get(y, x)) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround((1.0 - kAlpha) * image.at(y, x, c) + kAlpha * red[c]));
      }
    }
  }
  return out;
}

namespace {

json decision_json(const ReviewDecision& d) {
  return {{"sequence", d.sequence},
          {"imageId", d.image_id},
          {"verdict", to_string(d.verdict)},
          {"timestamp", d.timestamp},
          {"reviewer", d.reviewer}};
}

json item_json(const ItemState& s) {
  return {{"imageId", s.entry.image_id},
          {"status", to_string(s.entry.status)},
          {"borderFraction", s.entry.border_fraction},
          {"autoInverted", s.entry.inverted},
          {"failureReason", s.entry.failure_reason},
          {"decision", s.decision ? decision_json(*s.decision) : json(nullptr)}};
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, {{"code", code}, {"message", message}}, status);
}

void send_png(httplib::Response& res, const std::vector<std::uint8_t>& png) {
  res.set_content(std::string(png.begin(), png.end()), "image/png");
}

// Runs a handler and maps library errors onto HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFoundError& e) {
    send_error(res, 404, "not_found", e.what());
  } catch (const Error& e) {
    send_error(res, 500, to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

}  // namespace

struct ReviewServer::Impl {
  ReviewStore& store;
  ServerOptions options;
  httplib::Server server;
  std::thread thread;
  std::unique_ptr<ReviewLock> lock;

  Impl(ReviewStore& s, ServerOptions o) : store(s), options(std::move(o)) {}

  void routes() {
    server.Get("/api/items", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        json items = json::array();
        for (const auto& s : store.items()) items.push_back(item_json(s));
        send_json(res, {{"items", items}});
      });
    });
    server.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        const auto p = store.progress();
        send_json(res, {{"total", p.total},
                        {"decided", p.decided},
                        {"undecided", p.total - p.decided},
                        {"accept", p.accept},
                        {"invert", p.invert},
                        {"exclude", p.exclude}});
      });
    });
    server.Get(R"(/api/image/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_png(res, io::encode_png(store.image(req.matches[1]))); });
    });
    server.Get(R"(/api/mask/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_png(res, io::encode_png(store.effective_mask(req.matches[1]))); });
    });
    server.Get(R"(/api/overlay/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.matches[1];
        send_png(res, io::encode_png(overlay(store.image(id), store.effective_mask(id))));
      });
    });
    server.Post("/api/decision", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("imageId") || !body["imageId"].is_string()) {
          send_error(res, 400, "bad_request", "body must be an object with a string imageId");
          return;
        }
        const auto verdict_field = body.value("verdict", json());
        const auto verdict = verdict_field.is_string() ? parse_verdict(verdict_field.get<std::string>()) : std::nullopt;
        if (!verdict) {
          send_error(res, 422, "invalid_verdict", "verdict must be one of accept, invert, exclude");
          return;
        }
        const auto reviewer = body.value("reviewer", json(""));
        if (!reviewer.is_string()) {
          send_error(res, 422, "invalid_reviewer", "reviewer must be a string");
          return;
        }
        const auto d = store.record(body["imageId"].get<std::string>(), *verdict, reviewer.get<std::string>());
        send_json(res, decision_json(d));
      });
    });
    if (!options.static_dir.empty()) server.set_mount_point("/", options.static_dir.string());
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not_found" : "error", req.path);
    });
  }
};

ReviewServer::ReviewServer(ReviewStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start() {
  if (impl_->options.port < 0 || impl_->options.port > 65535) throw StartupError("port out of range");
  if (!impl_->options.static_dir.empty() && !std::filesystem::is_directory(impl_->options.static_dir)) {
    throw StartupError("static directory not found: " + impl_->options.static_dir.string());
  }
  impl_->lock = std::make_unique<ReviewLock>(impl_->store.layout());
  // Without SO_REUSEPORT a second server on a busy port fails to bind.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  impl_->routes();
  const auto& host = impl_->options.host;
  if (impl_->options.port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else {
    port_ = impl_->server.bind_to_port(host, impl_->options.port) ? impl_->options.port : -1;
  }
  if (port_ <= 0) {
    impl_->lock.reset();
    throw StartupError("cannot bind " + host + ":" + std::to_string(impl_->options.port) + " (port in use?)");
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void ReviewServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->lock.reset();
}

}  // namespace lesion::review
