/*
 * Copyright 2026 The CS3 Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cs3/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"cs3: streaming two-tower retrieval with cross-tower and cascade sharing"};
  app.require_subcommand(1);

  std::string config_path, out_path, snapshot_path, stream_path;
  bool frozen = false;
  bool cascade_online = false;
  cs3::GradcheckOptions gc;
  cs3::ServerOptions srv;

  auto* synth = app.add_subcommand("synth", "generate a synthetic click stream CSV");
  synth->add_option("-c,--config", config_path, "config file ([synth] section)")->required();
  synth->add_option("-o,--out", out_path, "output CSV path")->required();

  auto* train = app.add_subcommand("train", "train over a stream, writing snapshots and a timeline");
  train->add_option("-c,--config", config_path, "config file")->required();

  auto* eval = app.add_subcommand("eval", "score a stream with a snapshot");
  eval->add_option("-c,--config", config_path, "config file")->required();
  eval->add_option("-s,--snapshot", snapshot_path, "snapshot file")->required();
  eval->add_option("--stream", stream_path, "stream CSV (default: experiment.dataset)");
  eval->add_flag("--frozen-caches", frozen, "do not advance caches while scoring");
  eval->add_flag("--cascade-online", cascade_online, "keep training the cascade while scoring");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  grad->add_option("-c,--config", config_path, "config file")->required();
  grad->add_option("-n,--instances", gc.instances, "random instances per module");
  grad->add_option("--seed", gc.seed, "seed");

  auto* svr = app.add_subcommand("embsvr", "run the embedding server");
  svr->add_option("-b,--bind", srv.bind, "host:port")->capture_default_str();
  svr->add_option("-d,--dim", srv.dim, "vector dimension")->capture_default_str();
  svr->add_option("-l,--log", srv.log_path, "append-only write log, replayed on start");

  auto* ablate = app.add_subcommand("ablate", "run {base,+CAS,+CTS,+CMS,+CS3} over the seed list");
  ablate->add_option("-c,--config", config_path, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*svr) return cs3::cmd_embsvr(srv);
    cs3::ExperimentConfig x = cs3::load_experiment(config_path);
    if (*synth) return cs3::cmd_synth(x.synth, out_path);
    if (*train) return cs3::cmd_train(x);
    if (*eval) {
      const auto mode = frozen           ? cs3::EvalMode::Frozen
                        : cascade_online ? cs3::EvalMode::CascadeOnline
                                         : cs3::EvalMode::Progressive;
      return cs3::cmd_eval(x, snapshot_path, stream_path, mode);
    }
    if (*grad) return cs3::cmd_gradcheck(x, gc);
    if (*ablate) return cs3::cmd_ablate(x);
  } catch (const std::invalid_argument& e) {
    cs3::log(cs3::LogLevel::Error, e.what());
    return cs3::kExitValidation;
  } catch (const cs3::SnapshotError& e) {
    cs3::log(cs3::LogLevel::Error, e.what());
    return cs3::kExitValidation;
  } catch (const cs3::StreamFormatError& e) {
    cs3::log(cs3::LogLevel::Error, e.what());
    return cs3::kExitValidation;
  } catch (const cs3::NumericError& e) {
    cs3::log(cs3::LogLevel::Error, e.what());
    return cs3::kExitDivergence;
  } catch (const std::exception& e) {
    cs3::log(cs3::LogLevel::Error, e.what());
    return cs3::kExitDivergence;
  }
  return cs3::kExitValidation;
}
