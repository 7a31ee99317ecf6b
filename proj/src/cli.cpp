#include "sashimi/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "sashimi/checkpoint.hpp"
#include "sashimi/config.hpp"
#include "sashimi/generate.hpp"
#include "sashimi/hippo.hpp"
#include "sashimi/quant.hpp"
#include "sashimi/train.hpp"
#include "sashimi/wav.hpp"

namespace sashimi::cli {
namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::uint8_t> wav_to_codes(const std::string& path, const quant::QuantSpec& q) {
  std::vector<std::uint8_t> codes;
  for (auto s : wav::read(path)) codes.push_back(quant::encode(wav::from_pcm16(s), q));
  return codes;
}

int cmd_hippo_verify(const std::string& family, std::size_t n, std::optional<double> beta, std::ostream& out) {
  hippo::HippoSpec spec{hippo::parse_family(family), n, beta};
  if (spec.family == hippo::Family::lagt && !spec.beta) spec.beta = 0.0;
  spec.validate();
  const auto r = hippo::verify_nplr(spec);
  out << "family: " << hippo::family_name(spec.family) << "\n"
      << "n: " << n << "\n"
      << "rank: " << r.rank << "\n"
      << "shift: " << fmt17(r.shift) << "\n"
      << "reconstruction_err: " << fmt17(r.reconstruction_err) << "\n"
      << "unitarity_err: " << fmt17(r.unitarity_err) << "\n"
      << "re_lambda_err: " << fmt17(r.re_lambda_err) << "\n"
      << "dplr_err: " << fmt17(r.dplr_err) << "\n";
  const bool ok = r.max_residual() < 1e-8;
  out << "status: " << (ok ? "ok" : "FAILED") << "\n";
  return ok ? kOk : kRuntime;
}

int cmd_stability(const std::string& checkpoint, const std::string& out_path, std::ostream& out) {
  const auto c = ckpt::load(checkpoint);
  const std::string csv = stability_csv(stability_rows(c.model));
  if (out_path.empty() || out_path == "-") {
    out << csv;
  } else {
    std::ofstream f(out_path, std::ios::binary);
    f << csv;
    if (!f) throw std::runtime_error("cannot write " + out_path);
  }
  return kOk;
}

int cmd_train(const std::string& config_path, const std::string& out_override, std::ostream& out) {
  const auto cfg = config::load(config_path);
  Rng init = Rng::derive(cfg.seed, "init");
  Rng data_rng = Rng::derive(cfg.seed, "data");
  Rng batch_rng = Rng::derive(cfg.seed, "batch");
  model::SashimiModel m(cfg.model, init);
  const auto signal = data::make_synthetic(cfg.data, data_rng);
  const auto stream = quant::encode_all(signal, cfg.quant);
  train::Optimizer opt(cfg.train, m);
  for (std::size_t s = 0; s < cfg.train.steps; ++s) {
    const auto batch = train::sample_batch(stream, cfg.train.batch, cfg.train.seq_len, batch_rng);
    const double loss = train::train_step(m, batch, cfg.train, opt);
    if (cfg.log_every != 0 && (s % cfg.log_every == 0 || s + 1 == cfg.train.steps)) {
      out << "step " << s << " loss_bits " << fmt17(loss) << "\n";
    }
  }
  const std::string path = out_override.empty() ? cfg.out : out_override;
  ckpt::save(ckpt::Checkpoint{m, cfg.quant}, path);
  out << "checkpoint " << path << "\n";
  return kOk;
}

int cmd_generate(const std::string& checkpoint, const std::string& prime_wav, std::size_t length, std::uint64_t seed,
                 const std::string& out_wav, std::ostream& out) {
  const auto c = ckpt::load(checkpoint);
  std::vector<std::uint8_t> prime;
  if (!prime_wav.empty()) prime = wav_to_codes(prime_wav, c.quant);
  const auto r = gen::generate(c.model, prime, length, Rng::derive(seed, "sample"));
  std::vector<std::int16_t> pcm;
  pcm.reserve(r.bytes.size());
  for (auto b : r.bytes) pcm.push_back(wav::to_pcm16(quant::decode(b, c.quant)));
  wav::write(out_wav, pcm);
  out << "samples " << pcm.size() << "\n";
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_wav, std::size_t chunk_len, std::ostream& out) {
  const auto c = ckpt::load(checkpoint);
  const auto codes = wav_to_codes(data_wav, c.quant);
  const auto r = train::evaluate_nll(c.model, codes, chunk_len);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", r.nll_bits);
  out << buf << "\n";
  return kOk;
}

}  // namespace

std::vector<StabilityRow> stability_rows(const model::SashimiModel& m) {
  std::vector<StabilityRow> rows;
  for (const auto& idx : m.ssm_layers()) {
    // "t{k}.{stack}.{i}.s4.{ssm|ssm_bwd}"
    StabilityRow row;
    const auto dot = idx.name.find('.');
    row.tier = std::stoul(idx.name.substr(1, dot - 1));
    const auto s4 = idx.name.find(".s4.");
    row.layer = idx.name.substr(dot + 1, s4 - dot - 1);
    row.channel_group = idx.name.ends_with("ssm_bwd") ? "bwd" : "fwd";
    const auto lt = m.layer_tensors(idx);
    row.hurwitz_by_construction = true;
    row.max_re_lambda = -std::numeric_limits<double>::infinity();
    for (std::size_t ch = 0; ch < lt.channels(); ++ch) {
      const auto rep = ssm::stability_report(ssm::channel_params(lt, ch));
      row.spectral_radius = std::max(row.spectral_radius, rep.spectral_radius_abar);
      row.max_re_lambda = std::max(row.max_re_lambda, rep.max_re_lambda);
      row.hurwitz_by_construction = row.hurwitz_by_construction && rep.hurwitz_by_construction;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string stability_csv(const std::vector<StabilityRow>& rows) {
  std::string s = "tier,layer,channel_group,spectral_radius,max_re_lambda,hurwitz_by_construction\n";
  for (const auto& r : rows) {
    s += std::to_string(r.tier) + "," + r.layer + "," + r.channel_group + "," + fmt17(r.spectral_radius) + "," +
         fmt17(r.max_re_lambda) + "," + (r.hurwitz_by_construction ? "true" : "false") + "\n";
  }
  return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"State-space waveform modeling toolkit", "sashimi"};
  app.require_subcommand(1);

  auto* hippo_cmd = app.add_subcommand("hippo", "HiPPO matrix utilities");
  hippo_cmd->require_subcommand(1);
  auto* verify = hippo_cmd->add_subcommand("verify", "Check the normal-plus-low-rank and diagonalized forms");
  std::string family;
  std::size_t n = 0;
  std::optional<double> beta;
  verify->add_option("--family", family, "lagt, legs or legt")->required();
  verify->add_option("--n", n, "state size")->required()->check(CLI::PositiveNumber);
  verify->add_option("--beta", beta, "LagT shift in [0, 1/2]");

  auto* stab_cmd = app.add_subcommand("stability", "Spectral radius of every discretized state matrix");
  stab_cmd->require_subcommand(1);
  auto* report = stab_cmd->add_subcommand("report", "Write a CSV row per SSM");
  std::string checkpoint, out_path;
  report->add_option("--checkpoint", checkpoint)->required();
  report->add_option("--out", out_path, "CSV path (stdout when omitted)");

  auto* train_cmd = app.add_subcommand("train", "Train on a synthetic dataset");
  std::string config_path, train_out;
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--out", train_out, "checkpoint path (overrides the config)");

  auto* gen_cmd = app.add_subcommand("generate", "Sample a waveform autoregressively");
  std::string prime_wav, out_wav;
  std::size_t length = 0;
  std::uint64_t seed = 0;
  gen_cmd->add_option("--checkpoint", checkpoint)->required();
  gen_cmd->add_option("--prime-wav", prime_wav);
  gen_cmd->add_option("--length", length)->required();
  gen_cmd->add_option("--seed", seed);
  gen_cmd->add_option("--out-wav", out_wav)->required();

  auto* eval_cmd = app.add_subcommand("eval", "Chunked NLL in bits");
  std::string data_wav;
  std::size_t chunk_len = 0;
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--data-wav", data_wav)->required();
  eval_cmd->add_option("--chunk-len", chunk_len)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*verify) return cmd_hippo_verify(family, n, beta, out);
    if (*report) return cmd_stability(checkpoint, out_path, out);
    if (*train_cmd) return cmd_train(config_path, train_out, out);
    if (*gen_cmd) return cmd_generate(checkpoint, prime_wav, length, seed, out_wav, out);
    if (*eval_cmd) return cmd_eval(checkpoint, data_wav, chunk_len, out);
  } catch (const ssm::DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  err << app.help();
  return kUsage;
}

}  // namespace sashimi::cli
