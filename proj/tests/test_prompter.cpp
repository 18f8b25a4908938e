#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "cop/prompter.hpp"
#include "doctest.h"

using namespace cop;

namespace {

Image random_image(int h, int w, Rng& rng) {
  Image img(h, w);
  const double lo = 1.0 / 255.0;
  for (auto& v : img.data) v = lo + (1.0 - lo) * rng.uniform();
  return img;
}

// two synthetic "cameras": bright warm vs dark cool noise
std::vector<Image> two_camera_batch(int per_camera, Rng& rng) {
  std::vector<Image> batch;
  for (int i = 0; i < 2 * per_camera; ++i) {
    bool warm = i < per_camera;
    Image img(16, 8);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 8; ++x) {
        double base = warm ? 0.65 : 0.25;
        double n = 0.15 * rng.uniform();
        img.set_pixel(y, x,
                      {base + n, base + 0.7 * n,
                       (warm ? base - 0.1 : base + 0.1) + 0.5 * n});
      }
    batch.push_back(img);
  }
  return batch;
}

}  // namespace

TEST_CASE("forward always yields positive stddev") {
  Rng rng(1);
  PrompterNet p = PrompterNet::create(rng);
  Image img = random_image(20, 10, rng);
  ColorStats s = prompter_forward(p, img);
  for (int c = 0; c < 3; ++c) CHECK(s.stddev[c] > 0.0);
  CHECK(s.is_finite());
}

TEST_CASE("zero net exposes the output bias through the heads") {
  PrompterNet p{Mlp(PrompterNet::architecture())};
  // last layer biases are the final 6 parameters
  auto& params = p.net.params();
  const int base = p.net.param_count() - 6;
  double bias[6] = {0.25, -0.5, 0.125, 0.2, -0.1, 0.0};
  for (int i = 0; i < 6; ++i) params[base + i] = bias[i];
  Image img(4, 4);
  for (auto& v : img.data) v = 0.5;
  ColorStats s = prompter_forward(p, img);
  for (int c = 0; c < 3; ++c) {
    CHECK(s.mean[c] == bias[c]);
    CHECK(s.stddev[c] == std::exp(bias[c + 3]));
  }
}

TEST_CASE("pixel permutation inside grid cells is invisible") {
  Rng rng(2);
  PrompterNet p = PrompterNet::create(rng);
  // 32x16 image: each grid cell is exactly 2x2; dyadic values keep the
  // cell means exact under reordering
  Image img(32, 16);
  for (auto& v : img.data) v = rng.below(256) / 256.0;
  Image permuted = img;
  for (int gy = 0; gy < kGridH; ++gy)
    for (int gx = 0; gx < kGridW; ++gx) {
      int y = 2 * gy, x = 2 * gx;
      // rotate the 4 pixels of the cell
      Vec3 a = img.pixel(y, x), b = img.pixel(y, x + 1),
           c = img.pixel(y + 1, x), d = img.pixel(y + 1, x + 1);
      permuted.set_pixel(y, x, d);
      permuted.set_pixel(y, x + 1, a);
      permuted.set_pixel(y + 1, x, b);
      permuted.set_pixel(y + 1, x + 1, c);
    }
  ColorStats s1 = prompter_forward(p, img);
  ColorStats s2 = prompter_forward(p, permuted);
  CHECK(s1.mean == s2.mean);
  CHECK(s1.stddev == s2.stddev);
}

TEST_CASE("loss is the mean squared error over six components") {
  ColorStats a, b;
  a.mean = {1.0, 0.0, 0.0};
  a.stddev = {1.0, 1.0, 1.0};
  b.mean = {0.0, 0.0, 0.0};
  b.stddev = {1.0, 1.0, 1.0};
  CHECK(prompter_loss(a, a) == 0.0);
  CHECK(prompter_loss(a, b) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(prompter_loss(a, b) == prompter_loss(b, a));
  CHECK(prompter_loss(a, b) >= 0.0);
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(3);
  PrompterNet p = PrompterNet::create(rng);
  std::vector<Image> raw;
  for (int i = 0; i < 3; ++i) raw.push_back(random_image(16, 8, rng));
  Rng corrupt_rng(17);
  auto corrupted = color_resample(raw, corrupt_rng);
  std::vector<std::vector<double>> inputs;
  std::vector<ColorStats> targets;
  for (const auto& r : corrupted) {
    inputs.push_back(pool_to_grid(r.image));
    targets.push_back(r.original);
  }

  std::vector<double> grad(p.net.param_count(), 0.0);
  prompter_batch_grad(p, inputs, targets, grad);

  auto loss_now = [&]() {
    std::vector<double> g(p.net.param_count(), 0.0);
    return prompter_batch_grad(p, inputs, targets, g);
  };

  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    int idx = rng.below(p.net.param_count());
    double saved = p.net.params()[idx];
    p.net.params()[idx] = saved + h;
    double up = loss_now();
    p.net.params()[idx] = saved - h;
    double down = loss_now();
    p.net.params()[idx] = saved;
    double fd = (up - down) / (2 * h);
    double denom = std::max({std::abs(fd), std::abs(grad[idx]), 1e-8});
    CHECK(std::abs(fd - grad[idx]) / denom < 1e-4);
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("training drives the loss down on a two-camera set") {
  Rng rng(4);
  std::vector<Image> batch = two_camera_batch(8, rng);
  PrompterTrainer trainer(PrompterNet::create(rng), /*lr=*/3e-3);
  Rng train_rng(5);
  double first = trainer.train_step(batch, train_rng);
  double last = first;
  for (int step = 1; step < 500; ++step)
    last = trainer.train_step(batch, train_rng);
  CHECK(last < 0.10 * first);
}

TEST_CASE("zero learning rate leaves the net bit-exact") {
  Rng rng(6);
  PrompterNet p = PrompterNet::create(rng);
  std::vector<double> before = p.net.params();
  PrompterTrainer trainer(std::move(p), /*lr=*/0.0);
  std::vector<Image> batch{random_image(8, 4, rng), random_image(8, 4, rng)};
  Rng train_rng(7);
  double loss = trainer.train_step(batch, train_rng);
  CHECK(std::isfinite(loss));
  CHECK(trainer.prompter().net.params() == before);
}

TEST_CASE("training is deterministic under a fixed seed") {
  Rng data_rng(8);
  std::vector<Image> batch = two_camera_batch(4, data_rng);
  auto run = [&]() {
    Rng init(99);
    PrompterTrainer t(PrompterNet::create(init), 1e-3);
    Rng train_rng(100);
    for (int i = 0; i < 25; ++i) t.train_step(batch, train_rng);
    return t.prompter().net.params();
  };
  CHECK(run() == run());
}

TEST_CASE("recover with a random net stays a valid image") {
  Rng rng(9);
  PrompterNet p = PrompterNet::create(rng);
  Image img = random_image(16, 8, rng);
  Image out = prompter_recover(p, img);
  CHECK(out.height == img.height);
  CHECK(out.width == img.width);
  CHECK(out.all_finite());
  for (double v : out.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  ColorStats s = image_stats(srgb_to_lab(out));
  CHECK(s.is_finite());
}

TEST_CASE("pool round trip preserves forward outputs bit-exactly") {
  Rng rng(10);
  PrompterPool pool;
  pool.append("task0", PrompterNet::create(rng));
  pool.append("task1", PrompterNet::create(rng));
  std::stringstream file;
  pool_save(pool, file);
  PrompterPool back = pool_load(file);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].first == "task0");
  CHECK(back.entries[1].first == "task1");
  Image probe = random_image(16, 8, rng);
  for (int i = 0; i < 2; ++i) {
    ColorStats a = prompter_forward(pool.entries[i].second, probe);
    ColorStats b = prompter_forward(back.entries[i].second, probe);
    CHECK(a.mean == b.mean);
    CHECK(a.stddev == b.stddev);
  }
}

TEST_CASE("empty pool round trips") {
  PrompterPool pool;
  std::stringstream file;
  pool_save(pool, file);
  PrompterPool back = pool_load(file);
  CHECK(back.entries.empty());
}

TEST_CASE("truncated or corrupted pool files are rejected") {
  Rng rng(11);
  PrompterPool pool;
  pool.append("t", PrompterNet::create(rng));
  std::stringstream file;
  pool_save(pool, file);
  std::string bytes = file.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS(pool_load(truncated));

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;  // damage the payload, not the header
  std::stringstream corrupted(flipped);
  CHECK_THROWS(pool_load(corrupted));

  std::stringstream not_a_pool(std::string("definitely not a pool file"));
  CHECK_THROWS(pool_load(not_a_pool));
}

TEST_CASE("duplicate task ids are rejected") {
  Rng rng(12);
  PrompterPool pool;
  pool.append("t", PrompterNet::create(rng));
  CHECK_THROWS(pool.append("t", PrompterNet::create(rng)));
}
