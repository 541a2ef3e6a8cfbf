// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "support.hpp"

#include "zoomsplat/error.hpp"
#include "zoomsplat/io.hpp"
#include "zoomsplat/loss.hpp"
#include "zoomsplat/metrics.hpp"
#include "zoomsplat/resample.hpp"
#include "zoomsplat/sr.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <thread>

using namespace zoomsplat;
using json = nlohmann::json;

namespace {

ImageBuffer from_json(const json &j) {
    return ImageBuffer(j.at("width").get<int>(), j.at("height").get<int>(), j.at("channels").get<int>(),
                       j.at("data").get<std::vector<double>>());
}

json load_fixture() {
    std::ifstream in(ZOOMSPLAT_TEST_DATA_DIR "/sr_parity_ramp16.json");
    return json::parse(in);
}

double max_abs_diff(const ImageBuffer &a, const ImageBuffer &b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

SrRequest request_for(const ImageBuffer &lr, int scale = 4) {
    SrRequest r;
    r.lr_image = lr;
    r.context_coarse = lr;
    r.context_zoom = lr;
    r.warped_neighbors.push_back({lr, ImageBuffer(lr.width(), lr.height(), 1, 1.0)});
    r.scale = scale;
    r.prompt = "test";
    return r;
}

// In-process stand-in for the sidecar. Behaviour is switched per test.
class MockSidecar {
  public:
    std::function<void(const httplib::Request &, httplib::Response &)> on_super_resolve;
    std::function<void(const httplib::Request &, httplib::Response &)> on_prompt;
    std::atomic<int> sr_calls{0};

    MockSidecar() {
        on_super_resolve = [](const httplib::Request &req, httplib::Response &res) {
            const json body = json::parse(req.body);
            const ImageBuffer lr = decode_png(base64_decode(body.at("lr_image").get<std::string>()));
            const ImageBuffer hr = builtin_reference_sr(lr, body.at("scale").get<int>());
            const json reply{{"hr_image", base64_encode(encode_png(hr, 16))},
                             {"prompt_used", body.at("prompt")},
                             {"provider", "mock"}};
            res.set_content(reply.dump(), "application/json");
        };
        on_prompt = [](const httplib::Request &, httplib::Response &res) {
            res.set_content(json{{"prompt", "a mock prompt"}}.dump(), "application/json");
        };
        server_.Post("/v1/super_resolve", [this](const httplib::Request &req, httplib::Response &res) {
            ++sr_calls;
            on_super_resolve(req, res);
        });
        server_.Post("/v1/prompt", [this](const httplib::Request &req, httplib::Response &res) {
            on_prompt(req, res);
        });
        server_.Get("/v1/health", [](const httplib::Request &, httplib::Response &res) {
            res.set_content(R"({"status":"ok","mode":"mock","version":"0.1.0"})", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockSidecar() {
        server_.stop();
        thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

    RemoteOptions options() const {
        RemoteOptions o;
        o.endpoint = endpoint();
        o.timeout_s = 5.0;
        o.backoff_s = {0.01, 0.02};
        return o;
    }

  private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace

TEST(BuiltinSr, ConstantStaysConstant) {
    const ImageBuffer lr(7, 5, 3, 0.42);
    for (int scale : {2, 4}) {
        const ImageBuffer hr = builtin_reference_sr(lr, scale);
        EXPECT_EQ(hr.width(), 7 * scale);
        EXPECT_EQ(hr.height(), 5 * scale);
        for (double v : hr.data()) {
            EXPECT_NEAR(v, 0.42, 1e-12);
        }
    }
    EXPECT_THROW(builtin_reference_sr(lr, 3), InvalidParameter);
}

TEST(BuiltinSr, RampMatchesSharedFixture) {
    const json fixture = load_fixture();
    const ImageBuffer lr = from_json(fixture.at("lr"));
    const ImageBuffer expected = from_json(fixture.at("hr"));
    const ImageBuffer hr = builtin_reference_sr(lr, fixture.at("scale").get<int>());
    ASSERT_TRUE(hr.same_shape(expected));
    EXPECT_LE(max_abs_diff(hr, expected), 1e-6);
}

TEST(BuiltinSr, WhitePixelKeepsPeakAndEnergy) {
    ImageBuffer lr(9, 9, 1, 0.0);
    lr.at(4, 4) = 1.0;
    const ImageBuffer hr = builtin_reference_sr(lr, 2);

    // Kernel sums: interpolation and the sharpening difference both conserve
    // energy, so before clamping the total is s^2 times the input.
    const ImageBuffer up = bicubic_upsample(lr, 2);
    const ImageBuffer blurred = gaussian_blur(up, kUnsharpSigma);
    double sharpened_total = 0.0;
    double peak = -1.0;
    int px = -1, py = -1;
    for (int y = 0; y < hr.height(); ++y) {
        for (int x = 0; x < hr.width(); ++x) {
            const double v = up.at(x, y) + kUnsharpAmount * (up.at(x, y) - blurred.at(x, y));
            sharpened_total += v;
            EXPECT_NEAR(hr.at(x, y), std::clamp(v, 0.0, 1.0), 1e-12);
            if (hr.at(x, y) > peak) {
                peak = hr.at(x, y);
                px = x;
                py = y;
            }
        }
    }
    EXPECT_TRUE(px == 8 || px == 9);
    EXPECT_TRUE(py == 8 || py == 9);
    EXPECT_NEAR(sharpened_total, 4.0, 0.05 * 4.0);
}

TEST(BuiltinSr, CrossScaleRoundTrips) {
    const ImageBuffer img = zstest::smooth_image(64, 64, 3, 0.3);
    const ImageBuffer restored = builtin_reference_sr(degrade_downsample(img, 4), 4);
    EXPECT_GE(psnr(restored, img), 28.0);
    const ImageBuffer lr = zstest::smooth_image(16, 16, 3, 0.8);
    EXPECT_GE(psnr(degrade_downsample(builtin_reference_sr(lr, 4), 4), lr), 35.0);
}

TEST(BuiltinSr, ProviderIsDeterministic) {
    std::mt19937_64 rng(1);
    BuiltinSrProvider provider("static words");
    const SrRequest req = request_for(zstest::random_image(rng, 12, 12, 3));
    const SrResponse a = super_resolve(req, provider);
    const SrResponse b = super_resolve(req, provider);
    EXPECT_EQ(a.hr_image, b.hr_image);
    EXPECT_EQ(a.provider, SrProviderKind::builtin);
    EXPECT_EQ(request_prompt(req.context_coarse, req.context_zoom, provider), "static words");
}

TEST(SrRequest, Validation) {
    SrRequest req = request_for(ImageBuffer(8, 8, 3, 0.5));
    EXPECT_NO_THROW(req.validate());
    req.warped_neighbors[0].mask = ImageBuffer(4, 4, 1);
    EXPECT_THROW(req.validate(), InvalidParameter);
    req = request_for(ImageBuffer(8, 8, 3, 0.5));
    req.context_zoom = ImageBuffer(8, 9, 3);
    EXPECT_THROW(req.validate(), InvalidParameter);
    req = request_for(ImageBuffer(8, 8, 3, 0.5), 1);
    EXPECT_THROW(req.validate(), InvalidParameter);
}

TEST(SrPrompt, DefaultsAndTruncation) {
    BuiltinSrProvider empty("");
    const ImageBuffer img(4, 4, 3);
    EXPECT_EQ(request_prompt(img, img, empty), std::string(kDefaultPrompt));
    BuiltinSrProvider verbose(std::string(600, 'x'));
    EXPECT_EQ(request_prompt(img, img, verbose).size(), kMaxPromptLength);
}

TEST(Base64, RoundTripAndRejects) {
    for (std::size_t n = 0; n < 10; ++n) {
        std::vector<std::uint8_t> bytes(n);
        for (std::size_t i = 0; i < n; ++i) {
            bytes[i] = static_cast<std::uint8_t>(37 * i + 250);
        }
        EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
    }
    const std::string hello = "hello";
    EXPECT_EQ(base64_encode(std::vector<std::uint8_t>(hello.begin(), hello.end())), "aGVsbG8=");
    EXPECT_THROW(base64_decode("abc"), ProtocolError);
    EXPECT_THROW(base64_decode("ab!d"), ProtocolError);
}

TEST(RemoteSr, ParityWithBuiltin) {
    MockSidecar mock;
    RemoteSrProvider remote(mock.options());
    const json fixture = load_fixture();
    const SrRequest req = request_for(from_json(fixture.at("lr")));
    const SrResponse got = super_resolve(req, remote);
    EXPECT_EQ(got.provider, SrProviderKind::remote);
    EXPECT_EQ(got.prompt_used, "test");
    EXPECT_LE(max_abs_diff(got.hr_image, from_json(fixture.at("hr"))), 1e-3);
}

TEST(RemoteSr, WrongDimensionsAreContractViolation) {
    MockSidecar mock;
    mock.on_super_resolve = [](const httplib::Request &, httplib::Response &res) {
        const json reply{{"hr_image", base64_encode(encode_png(ImageBuffer(5, 5, 3, 0.5), 16))}};
        res.set_content(reply.dump(), "application/json");
    };
    RemoteSrProvider remote(mock.options());
    EXPECT_THROW(super_resolve(request_for(ImageBuffer(4, 4, 3, 0.5)), remote), ContractViolation);
}

TEST(RemoteSr, MalformedPayloadIsProtocolError) {
    MockSidecar mock;
    RemoteSrProvider remote(mock.options());
    const SrRequest req = request_for(ImageBuffer(4, 4, 3, 0.5));
    for (const std::string body : {"not json", R"({"hr_image": 3})", R"({"hr_image": "!!!!"})",
                                   R"({"hr_image": "aGVsbG8="})"}) {
        mock.on_super_resolve = [body](const httplib::Request &, httplib::Response &res) {
            res.set_content(body, "application/json");
        };
        EXPECT_THROW(super_resolve(req, remote), ProtocolError) << body;
    }
    mock.on_super_resolve = [](const httplib::Request &, httplib::Response &res) {
        res.status = 400;
        res.set_content(R"({"error":{"code":"schema","message":"missing","field":"scale"}})",
                        "application/json");
    };
    const int before = mock.sr_calls;
    EXPECT_THROW(super_resolve(req, remote), ProtocolError);
    EXPECT_EQ(mock.sr_calls - before, 1);
}

TEST(RemoteSr, RetriesServerErrors) {
    MockSidecar mock;
    RemoteSrProvider remote(mock.options());
    const SrRequest req = request_for(ImageBuffer(4, 4, 3, 0.5));
    const auto good = mock.on_super_resolve;
    std::atomic<int> failures{2};
    mock.on_super_resolve = [&](const httplib::Request &q, httplib::Response &res) {
        if (failures-- > 0) {
            res.status = 503;
            return;
        }
        good(q, res);
    };
    EXPECT_NO_THROW(super_resolve(req, remote));
    EXPECT_EQ(mock.sr_calls, 3);

    mock.on_super_resolve = [](const httplib::Request &, httplib::Response &res) { res.status = 500; };
    EXPECT_THROW(super_resolve(req, remote), TransportError);
    EXPECT_EQ(mock.sr_calls, 6);
}

TEST(RemoteSr, UnreachableIsTransportError) {
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }
    RemoteOptions o;
    o.endpoint = "http://127.0.0.1:" + std::to_string(port);
    o.timeout_s = 1.0;
    o.backoff_s = {0.01, 0.01};
    RemoteSrProvider remote(o);
    EXPECT_THROW(super_resolve(request_for(ImageBuffer(4, 4, 3, 0.5)), remote), TransportError);
    EXPECT_EQ(remote.request_prompt(ImageBuffer(4, 4, 3), ImageBuffer(4, 4, 3)), std::string(kDefaultPrompt));
    EXPECT_THROW(remote.health(), TransportError);
}

TEST(RemoteSr, PromptEchoAndTruncation) {
    MockSidecar mock;
    RemoteSrProvider remote(mock.options());
    const ImageBuffer img(4, 4, 3, 0.2);
    EXPECT_EQ(remote.request_prompt(img, img), "a mock prompt");
    mock.on_prompt = [](const httplib::Request &, httplib::Response &res) {
        res.set_content(json{{"prompt", std::string(700, 'y')}}.dump(), "application/json");
    };
    EXPECT_EQ(remote.request_prompt(img, img).size(), kMaxPromptLength);
    mock.on_prompt = [](const httplib::Request &, httplib::Response &res) { res.status = 400; };
    EXPECT_EQ(remote.request_prompt(img, img), std::string(kDefaultPrompt));
}

TEST(RemoteSr, Health) {
    MockSidecar mock;
    RemoteSrProvider remote(mock.options());
    const json h = json::parse(remote.health());
    EXPECT_EQ(h.at("status"), "ok");
    EXPECT_EQ(h.at("mode"), "mock");
}

TEST(RemoteSr, EndpointOverrideFromEnvironment) {
    const std::string var(kEndpointEnvVar);
    ::unsetenv(var.c_str());
    EXPECT_EQ(resolve_endpoint("http://example.invalid:1"), "http://example.invalid:1");
    EXPECT_EQ(resolve_endpoint(""), RemoteOptions{}.endpoint);
    ::setenv(var.c_str(), "http://127.0.0.1:9999", 1);
    EXPECT_EQ(resolve_endpoint("http://example.invalid:1"), "http://127.0.0.1:9999");
    const auto provider = make_sr_provider(SrProviderKind::remote, "http://example.invalid:1");
    EXPECT_EQ(static_cast<RemoteSrProvider &>(*provider).options().endpoint, "http://127.0.0.1:9999");
    ::unsetenv(var.c_str());
    EXPECT_EQ(parse_provider_kind("remote"), SrProviderKind::remote);
    EXPECT_EQ(to_string(SrProviderKind::builtin), "builtin");
    EXPECT_THROW(parse_provider_kind("diffusion"), InvalidParameter);
}
