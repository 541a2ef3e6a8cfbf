// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/sr.hpp"

#include "zoomsplat/error.hpp"
#include "zoomsplat/io.hpp"
#include "zoomsplat/resample.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdlib>
#include <thread>

namespace zoomsplat {

using nlohmann::json;

std::string_view to_string(SrProviderKind kind) {
    return kind == SrProviderKind::builtin ? "builtin" : "remote";
}

SrProviderKind parse_provider_kind(std::string_view name) {
    if (name == "builtin") {
        return SrProviderKind::builtin;
    }
    if (name == "remote") {
        return SrProviderKind::remote;
    }
    throw InvalidParameter(fmt::format("unknown SR provider '{}'", name));
}

void SrRequest::validate() const {
    if (scale < 2) {
        throw InvalidParameter("SR scale must be at least 2");
    }
    if (lr_image.empty()) {
        throw InvalidParameter("SR request has no lr image");
    }
    const auto check = [&](const ImageBuffer &img, std::string_view what) {
        if (img.width() != lr_image.width() || img.height() != lr_image.height()) {
            throw InvalidParameter(fmt::format("{} is {}x{}, expected {}x{}", what, img.width(),
                                               img.height(), lr_image.width(), lr_image.height()));
        }
    };
    check(context_coarse, "context_coarse");
    check(context_zoom, "context_zoom");
    for (const auto &n : warped_neighbors) {
        check(n.image, "warped neighbor");
        check(n.mask, "warped neighbor mask");
        if (n.mask.channels() != 1) {
            throw InvalidParameter("warped neighbor mask must have one channel");
        }
    }
}

ImageBuffer builtin_reference_sr(const ImageBuffer &lr_image, int scale) {
    if (scale != 2 && scale != 4) {
        throw InvalidParameter(fmt::format("builtin SR supports scale 2 or 4, got {}", scale));
    }
    ImageBuffer up = bicubic_upsample(lr_image, scale);
    const ImageBuffer blurred = gaussian_blur(up, kUnsharpSigma);
    auto dst = up.data();
    auto low = blurred.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double sharpened = dst[i] + kUnsharpAmount * (dst[i] - low[i]);
        dst[i] = std::clamp(sharpened, 0.0, 1.0);
    }
    return up;
}

BuiltinSrProvider::BuiltinSrProvider(std::string static_prompt) : prompt_(std::move(static_prompt)) {}

SrResponse BuiltinSrProvider::super_resolve(const SrRequest &request) {
    request.validate();
    return SrResponse{builtin_reference_sr(request.lr_image, request.scale),
                      request.prompt.empty() ? prompt_ : request.prompt, SrProviderKind::builtin};
}

std::string BuiltinSrProvider::request_prompt(const ImageBuffer &, const ImageBuffer &) {
    return prompt_;
}

// ---------------------------------------------------------------------------
// base64

namespace {

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

} // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (const std::size_t rest = bytes.size() - i; rest > 0) {
        std::uint32_t v = bytes[i] << 16;
        if (rest == 2) {
            v |= bytes[i + 1] << 8;
        }
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    std::array<int, 256> lut;
    lut.fill(-1);
    for (std::size_t k = 0; k < kAlphabet.size(); ++k) {
        lut[static_cast<unsigned char>(kAlphabet[k])] = static_cast<int>(k);
    }
    if (text.size() % 4 != 0) {
        throw ProtocolError("base64 length is not a multiple of 4");
    }
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::uint32_t v = 0;
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=' && i + 4 == text.size() && k >= 2) {
                ++pad;
                v <<= 6;
                continue;
            }
            const int d = lut[static_cast<unsigned char>(c)];
            if (d < 0 || pad > 0) {
                throw ProtocolError("invalid base64 character");
            }
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        if (pad < 2) {
            out.push_back(static_cast<std::uint8_t>(v >> 8));
        }
        if (pad < 1) {
            out.push_back(static_cast<std::uint8_t>(v));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// remote client

namespace {

std::string encode_raster(const ImageBuffer &image) {
    return base64_encode(encode_png(image, 16));
}

ImageBuffer decode_raster(const json &body, const char *field) {
    if (!body.contains(field) || !body[field].is_string()) {
        throw ProtocolError(fmt::format("response field '{}' missing or not a string", field));
    }
    try {
        return decode_png(base64_decode(body[field].get<std::string>()));
    } catch (const ProtocolError &) {
        throw;
    } catch (const Error &e) {
        throw ProtocolError(fmt::format("response field '{}' is not a PNG: {}", field, e.what()));
    }
}

std::string truncate_prompt(std::string prompt) {
    if (prompt.size() <= kMaxPromptLength) {
        return prompt;
    }
    std::size_t cut = kMaxPromptLength;
    while (cut > 0 && (static_cast<unsigned char>(prompt[cut]) & 0xC0) == 0x80) {
        --cut;
    }
    prompt.resize(cut);
    return prompt;
}

} // namespace

RemoteSrProvider::RemoteSrProvider(RemoteOptions options) : options_(std::move(options)) {
    if (options_.max_retries < 0) {
        throw InvalidParameter("retry budget must be non-negative");
    }
}

std::string RemoteSrProvider::post_with_retry(const std::string &path, const std::string &body) {
    httplib::Client client(options_.endpoint);
    const auto timeout = std::chrono::duration<double>(options_.timeout_s);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            const double wait = options_.backoff_s.empty()
                                    ? 0.0
                                    : options_.backoff_s[std::min<std::size_t>(
                                          attempt - 1, options_.backoff_s.size() - 1)];
            spdlog::warn("retrying {}{} in {:.2f}s ({})", options_.endpoint, path, wait, last_error);
            std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        }
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = fmt::format("HTTP {}", res->status);
            continue;
        }
        if (res->status != 200) {
            throw ProtocolError(fmt::format("{}{} returned HTTP {}: {}", options_.endpoint, path,
                                            res->status, res->body));
        }
        return res->body;
    }
    throw TransportError(fmt::format("{}{} failed after {} retries: {}", options_.endpoint, path,
                                     options_.max_retries, last_error));
}

SrResponse RemoteSrProvider::super_resolve(const SrRequest &request) {
    request.validate();
    json body;
    body["scale"] = request.scale;
    body["lr_image"] = encode_raster(request.lr_image);
    body["warped_neighbors"] = json::array();
    for (const auto &n : request.warped_neighbors) {
        body["warped_neighbors"].push_back(
            {{"image", encode_raster(n.image)}, {"mask", encode_raster(n.mask)}});
    }
    body["context_coarse"] = encode_raster(request.context_coarse);
    body["context_zoom"] = encode_raster(request.context_zoom);
    body["prompt"] = request.prompt;

    const std::string text = post_with_retry("/v1/super_resolve", body.dump());
    const json reply = json::parse(text, nullptr, false);
    if (reply.is_discarded() || !reply.is_object()) {
        throw ProtocolError("super_resolve response is not a JSON object");
    }
    SrResponse out;
    out.hr_image = decode_raster(reply, "hr_image");
    out.prompt_used = reply.value("prompt_used", request.prompt);
    out.provider = SrProviderKind::remote;
    return out;
}

std::string RemoteSrProvider::request_prompt(const ImageBuffer &context_coarse,
                                             const ImageBuffer &context_zoom) {
    try {
        json body{{"context_coarse", encode_raster(context_coarse)},
                  {"context_zoom", encode_raster(context_zoom)}};
        const json reply = json::parse(post_with_retry("/v1/prompt", body.dump()), nullptr, false);
        if (reply.is_discarded() || !reply.contains("prompt") || !reply["prompt"].is_string()) {
            throw ProtocolError("prompt response has no 'prompt' string");
        }
        auto prompt = reply["prompt"].get<std::string>();
        if (prompt.empty()) {
            throw ProtocolError("prompt response is empty");
        }
        return truncate_prompt(std::move(prompt));
    } catch (const Error &e) {
        spdlog::warn("prompt request failed, using static prompt: {}", e.what());
        return options_.fallback_prompt;
    }
}

std::string RemoteSrProvider::health() {
    httplib::Client client(options_.endpoint);
    client.set_connection_timeout(std::chrono::seconds(2));
    auto res = client.Get("/v1/health");
    if (!res) {
        throw TransportError(fmt::format("{} unreachable: {}", options_.endpoint,
                                         httplib::to_string(res.error())));
    }
    const json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) {
        throw ProtocolError("health response is not JSON");
    }
    return reply.dump();
}

std::string resolve_endpoint(const std::string &configured) {
    if (const char *env = std::getenv(std::string(kEndpointEnvVar).c_str()); env && *env) {
        return env;
    }
    return configured.empty() ? RemoteOptions{}.endpoint : configured;
}

std::unique_ptr<SrProvider> make_sr_provider(SrProviderKind kind, const std::string &endpoint,
                                             const std::string &static_prompt) {
    if (kind == SrProviderKind::builtin) {
        return std::make_unique<BuiltinSrProvider>(static_prompt);
    }
    RemoteOptions options;
    options.endpoint = resolve_endpoint(endpoint);
    options.fallback_prompt = static_prompt;
    return std::make_unique<RemoteSrProvider>(std::move(options));
}

SrResponse super_resolve(const SrRequest &request, SrProvider &provider) {
    request.validate();
    SrResponse out = provider.super_resolve(request);
    const ImageBuffer &hr = out.hr_image;
    if (hr.width() != request.scale * request.lr_image.width() ||
        hr.height() != request.scale * request.lr_image.height() ||
        hr.channels() != request.lr_image.channels()) {
        throw ContractViolation(fmt::format("SR output is {}x{}x{}, expected {}x{}x{}", hr.width(),
                                            hr.height(), hr.channels(),
                                            request.scale * request.lr_image.width(),
                                            request.scale * request.lr_image.height(),
                                            request.lr_image.channels()));
    }
    for (double v : hr.data()) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw ContractViolation("SR output values must be finite and within [0, 1]");
        }
    }
    return out;
}

std::string request_prompt(const ImageBuffer &context_coarse, const ImageBuffer &context_zoom,
                           SrProvider &provider) {
    std::string prompt = provider.request_prompt(context_coarse, context_zoom);
    if (prompt.empty()) {
        spdlog::warn("provider returned an empty prompt, using the static prompt");
        prompt = std::string(kDefaultPrompt);
    }
    return truncate_prompt(std::move(prompt));
}

} // namespace zoomsplat
