// Copyright 2026 The dqn-drive Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DRIVE_METRICS_HPP_
#define DRIVE_METRICS_HPP_

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "drive/error.hpp"
#include "drive/trackmap.hpp"

namespace drive {

inline constexpr std::string_view kMetricsHeader =
    "episode,steps,total_reward,epsilon_end,mean_loss,laps,wall_ms";

struct MetricsRow {
  int episode = 0;
  int steps = 0;
  int total_reward = 0;
  double epsilon_end = 0.0;
  double mean_loss = 0.0;  // 0 when the episode ran no training step
  int laps = 0;
  std::int64_t wall_ms = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline std::string format_metrics_row(const MetricsRow& r) {
  return std::to_string(r.episode) + "," + std::to_string(r.steps) + "," +
         std::to_string(r.total_reward) + "," + detail::format_real(r.epsilon_end) + "," +
         detail::format_real(r.mean_loss) + "," + std::to_string(r.laps) + "," +
         std::to_string(r.wall_ms);
}

inline MetricsRow parse_metrics_row(std::string_view line) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    f.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (f.size() != 7) throw Error(ErrorCode::BadFormat, "metrics row needs 7 fields");
  auto as_int = [](std::string_view s, auto& out) {
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw Error(ErrorCode::BadFormat, "bad integer in metrics row: " + std::string(s));
    }
  };
  MetricsRow r;
  as_int(f[0], r.episode);
  as_int(f[1], r.steps);
  as_int(f[2], r.total_reward);
  r.epsilon_end = detail::parse_real(f[3], "epsilon_end");
  r.mean_loss = detail::parse_real(f[4], "mean_loss");
  as_int(f[5], r.laps);
  as_int(f[6], r.wall_ms);
  return r;
}

inline std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw Error(ErrorCode::BadFormat, "metrics header mismatch in " + path.string());
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_metrics_row(line));
  }
  return rows;
}

// Appends one flushed line per row so the file is valid after every episode.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out_ << kMetricsHeader << '\n';
    out_.flush();
  }

  void append(const MetricsRow& row) {
    out_ << format_metrics_row(row) << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::IoError, "metrics write failed");
  }

 private:
  std::ofstream out_;
};

}  // namespace drive

#endif  // DRIVE_METRICS_HPP_
