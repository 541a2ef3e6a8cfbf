// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/image.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace zoomsplat {

inline constexpr std::string_view kDefaultPrompt = "a sharp, detailed photograph";
inline constexpr std::size_t kMaxPromptLength = 512;
inline constexpr std::string_view kEndpointEnvVar = "ZOOMSPLAT_SR_ENDPOINT";

enum class SrProviderKind { builtin, remote };

std::string_view to_string(SrProviderKind kind);
SrProviderKind parse_provider_kind(std::string_view name);

struct WarpedNeighbor {
    ImageBuffer image;
    ImageBuffer mask; // 1 channel, 0 or 1
};

struct SrRequest {
    ImageBuffer lr_image;
    std::vector<WarpedNeighbor> warped_neighbors;
    ImageBuffer context_coarse;
    ImageBuffer context_zoom;
    std::string prompt;
    int scale = 4;

    /// Throws InvalidParameter unless every raster shares the lr resolution.
    void validate() const;
};

struct SrResponse {
    ImageBuffer hr_image;
    std::string prompt_used;
    SrProviderKind provider = SrProviderKind::builtin;
};

class SrProvider {
  public:
    virtual ~SrProvider() = default;
    virtual SrProviderKind kind() const noexcept = 0;
    virtual SrResponse super_resolve(const SrRequest &request) = 0;
    virtual std::string request_prompt(const ImageBuffer &context_coarse,
                                       const ImageBuffer &context_zoom) = 0;
};

/// Catmull-Rom upsample, unsharp mask, clamp to [0, 1]. Scale must be 2 or 4.
ImageBuffer builtin_reference_sr(const ImageBuffer &lr_image, int scale);

class BuiltinSrProvider final : public SrProvider {
  public:
    explicit BuiltinSrProvider(std::string static_prompt = std::string(kDefaultPrompt));

    SrProviderKind kind() const noexcept override { return SrProviderKind::builtin; }
    SrResponse super_resolve(const SrRequest &request) override;
    std::string request_prompt(const ImageBuffer &, const ImageBuffer &) override;

  private:
    std::string prompt_;
};

struct RemoteOptions {
    std::string endpoint = "http://127.0.0.1:8377";
    double timeout_s = 60.0;
    int max_retries = 2;
    std::vector<double> backoff_s{0.5, 1.0};
    std::string fallback_prompt = std::string(kDefaultPrompt);
};

/// Client for the sidecar's JSON protocol. Rasters travel as base64 16-bit PNG.
class RemoteSrProvider final : public SrProvider {
  public:
    explicit RemoteSrProvider(RemoteOptions options);

    SrProviderKind kind() const noexcept override { return SrProviderKind::remote; }
    SrResponse super_resolve(const SrRequest &request) override;
    /// Falls back to the static prompt with a warning on any failure.
    std::string request_prompt(const ImageBuffer &context_coarse,
                               const ImageBuffer &context_zoom) override;
    /// Returns the parsed /v1/health body as a JSON string.
    std::string health();

    const RemoteOptions &options() const noexcept { return options_; }

  private:
    std::string post_with_retry(const std::string &path, const std::string &body);

    RemoteOptions options_;
};

/// Environment override first, then `configured`, then the default port.
std::string resolve_endpoint(const std::string &configured);

std::unique_ptr<SrProvider> make_sr_provider(SrProviderKind kind, const std::string &endpoint = {},
                                             const std::string &static_prompt = std::string(kDefaultPrompt));

/// Checked entry points: enforce the output contract for any provider.
SrResponse super_resolve(const SrRequest &request, SrProvider &provider);
std::string request_prompt(const ImageBuffer &context_coarse, const ImageBuffer &context_zoom,
                           SrProvider &provider);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

} // namespace zoomsplat
