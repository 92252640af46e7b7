#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <thread>

#include "../common/fake_bridge.hpp"
#include "../common/test_support.hpp"
#include "dgslow/errors.hpp"
#include "dgslow/objectives.hpp"
#include "dgslow/remote_victim.hpp"

namespace dgslow {
namespace {

using nlohmann::json;
using testing::FakeBridge;
using testing::small_corpus;
using testing::trained_victim;

RemoteOptions fast() {
  RemoteOptions o;
  o.connect_timeout = std::chrono::milliseconds(500);
  o.read_timeout = std::chrono::milliseconds(5000);
  o.retry_backoff = std::chrono::milliseconds(1);
  return o;
}

TEST(Remote, AgreesWithTheLocalVictim) {
  const auto& local = trained_victim();
  FakeBridge bridge(local);
  const auto remote = connect_remote(bridge.url(), fast());
  EXPECT_EQ(remote->info().name, "fake");
  for (std::size_t i : {0, 3, 17, 42}) {
    const auto& inst = small_corpus()[i];
    const auto utt = tokenize(inst.utterance);
    const auto ref = tokenize(inst.references.front());

    const auto gl = local.generate(inst, utt), gr = remote->generate(inst, utt);
    EXPECT_EQ(gr.tokens, gl.tokens);
    EXPECT_EQ(gr.ended_by_eos, gl.ended_by_eos);
    EXPECT_NEAR(loss_eos(gr, Vocabulary::kEos), loss_eos(gl, Vocabulary::kEos), 1e-9);

    const auto sl = local.score_reference(inst, utt, ref), sr = remote->score_reference(inst, utt, ref);
    ASSERT_EQ(sr.token_probs.size(), ref.size());
    EXPECT_NEAR(compute_tc(sr), compute_tc(sl), 1e-6);
    for (double p : sr.token_probs) {
      EXPECT_GT(p, 0.0);
      EXPECT_LE(p, 1.0);
    }

    const StopLossParams params{1.0, 0.7, 0.9};
    const auto dl = local.gradients(inst, utt, ref, params), dr = remote->gradients(inst, utt, ref, params);
    EXPECT_EQ(dr.utterance, dl.utterance);
    EXPECT_TRUE(dr.g_ll.isApprox(dl.g_ll, 1e-12));
    EXPECT_TRUE(dr.g_stop.isApprox(dl.g_stop, 1e-12));
    EXPECT_EQ(static_cast<std::size_t>(dr.g_ll.rows()), serialize_input(inst, utt).tokens.size());

    // Same question twice, same answer.
    EXPECT_EQ(remote->generate(inst, utt).tokens, gr.tokens);
  }
}

TEST(Remote, AttackOverTheWireMatchesLocal) {
  const auto& local = trained_victim();
  FakeBridge bridge(local);
  const auto remote = connect_remote(bridge.url(), fast());
  AttackConfig cfg;
  cfg.c = 10;
  cfg.T = 2;
  Rng a(5), b(5);
  const auto ol = attack(small_corpus()[8], local, cfg, testing::attack_kit().resources(), a);
  const auto orr = attack(small_corpus()[8], *remote, cfg, testing::attack_kit().resources(), b);
  EXPECT_EQ(orr.adversarial_input, ol.adversarial_input);
  EXPECT_EQ(orr.adversarial_output, ol.adversarial_output);
  EXPECT_EQ(orr.queries_used, ol.queries_used);
}

TEST(Remote, WrongVersionIsRejected) {
  FakeBridge bridge(trained_victim());
  bridge.version = "2";
  try {
    connect_remote(bridge.url(), fast());
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_EQ(e.version(), "2");
  }
}

TEST(Remote, UnreachableEndpoint) {
  // Bind an ephemeral port and release it, so nothing is listening there.
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);
  ::close(fd);
  auto opts = fast();
  opts.max_retries = 2;
  try {
    connect_remote("http://127.0.0.1:" + std::to_string(port), opts);
    FAIL();
  } catch (const ConnectionError& e) {
    EXPECT_EQ(e.retries(), 2);
  }
}

TEST(Remote, BadUrl) {
  EXPECT_THROW(connect_remote("https://example.invalid", fast()), ConfigError);
  EXPECT_THROW(connect_remote("localhost:9", fast()), ConfigError);
}

TEST(Remote, BusyServerIsRetried) {
  FakeBridge bridge(trained_victim());
  const auto remote = connect_remote(bridge.url(), fast());
  const auto& inst = small_corpus()[1];
  bridge.busy_replies = 2;
  EXPECT_NO_THROW(remote->generate(inst, tokenize(inst.utterance)));
  bridge.busy_replies = 3;
  EXPECT_THROW(remote->generate(inst, tokenize(inst.utterance)), ConnectionError);
}

TEST(Remote, MalformedRepliesAreProtocolErrors) {
  FakeBridge bridge(trained_victim());
  const auto remote = connect_remote(bridge.url(), fast());
  const auto& inst = small_corpus()[2];
  const auto utt = tokenize(inst.utterance);
  const auto ref = tokenize(inst.references.front());

  bridge.tamper = [](const std::string& route, json& r) {
    if (route == "/score") r["token_probs"].erase(r["token_probs"].begin());
  };
  EXPECT_THROW(remote->score_reference(inst, utt, ref), ProtocolError);

  bridge.tamper = [](const std::string& route, json& r) {
    if (route == "/score") r["token_probs"][0] = 1.5;
  };
  EXPECT_THROW(remote->score_reference(inst, utt, ref), ProtocolError);

  bridge.tamper = [](const std::string& route, json& r) {
    if (route == "/gradients") r["g_stop"].erase(r["g_stop"].begin());
  };
  EXPECT_THROW(remote->gradients(inst, utt, ref, {}), ProtocolError);

  bridge.tamper = [](const std::string& route, json& r) {
    if (route == "/gradients") r["utterance_span"] = {0, 1};
  };
  EXPECT_THROW(remote->gradients(inst, utt, ref, {}), ProtocolError);

  bridge.tamper = [](const std::string& route, json& r) {
    if (route == "/generate") r.erase("tokens");
  };
  EXPECT_THROW(remote->generate(inst, utt), ProtocolError);

  bridge.tamper = {};
  EXPECT_NO_THROW(remote->generate(inst, utt));
}

TEST(Remote, ClientErrorStatusIsAProtocolError) {
  httplib::Server server;
  server.Get("/meta", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"protocol_version":"1"})", "application/json");
  });
  server.Post("/generate", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  server.Post("/score", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  {
    const auto remote = connect_remote("http://127.0.0.1:" + std::to_string(port) + "/", fast());
    const auto& inst = small_corpus()[0];
    EXPECT_THROW(remote->generate(inst, tokenize(inst.utterance)), ProtocolError);
    EXPECT_THROW(remote->score_reference(inst, tokenize(inst.utterance), tokenize("hi")), ProtocolError);
  }
  server.stop();
  t.join();
}

}  // namespace
}  // namespace dgslow
