#include "uqasr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace uqasr {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::pair<std::string, Matrix*>> named_mutable(AcousticModel& model, Matrix& mean, Matrix& inv_std) {
  std::vector<std::pair<std::string, Matrix*>> out{{"input.mean", &mean}, {"input.inv_std", &inv_std}};
  const auto add = [&out](const std::string& prefix, const std::string& suffix, MlpParams& p) {
    const auto ts = p.tensors();
    for (size_t k = 0; k < ts.size(); ++k) {
      out.emplace_back(prefix + std::string(MlpParams::kTensorNames[k]) + suffix, ts[k]);
    }
  };
  if (auto* f = std::get_if<FnnModel>(&model.body)) add("", "", f->params);
  if (auto* e = std::get_if<EnsembleModel>(&model.body))
    for (size_t i = 0; i < e->members.size(); ++i) add("member" + std::to_string(i) + ".", "", e->members[i]);
  if (auto* d = std::get_if<DropoutModel>(&model.body)) add("", "", d->params);
  if (auto* b = std::get_if<BnnModel>(&model.body)) {
    add("", ".mu", b->posterior.mu);
    add("", ".rho", b->posterior.rho);
  }
  return out;
}

void write_tensor(const fs::path& path, const Matrix& m) {
  std::vector<unsigned char> bytes(static_cast<size_t>(m.size()) * 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const auto bits = std::bit_cast<uint32_t>(static_cast<float>(m.data()[i]));
    for (int b = 0; b < 4; ++b) bytes[static_cast<size_t>(4 * i + b)] = static_cast<unsigned char>(bits >> (8 * b));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArtifactError("cannot write tensor " + path.string());
}

void read_tensor(const fs::path& path, Matrix& m) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("missing tensor file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != static_cast<size_t>(m.size()) * 4) {
    throw ArtifactError("tensor file " + path.string() + " has unexpected size");
  }
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= uint32_t(bytes[static_cast<size_t>(4 * i + b)]) << (8 * b);
    m.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
}

}  // namespace

void save_checkpoint(const fs::path& dir, const AcousticModel& model, const json& extra) {
  model.validate();
  fs::create_directories(dir);
  AcousticModel copy = model;
  Matrix mean = copy.norm.mean, inv_std = copy.norm.inv_std;
  const MlpShape shape = model.shape();

  json meta;
  meta["format_version"] = kCheckpointFormatVersion;
  meta["model_kind"] = std::string(to_string(model.kind()));
  meta["architecture"] = {{"input", shape.input}, {"hidden", shape.hidden}, {"output", shape.output},
                          {"hidden_layers", 2}, {"activation", "relu"}};
  meta["samples"] = model.num_samples();
  if (const auto* d = std::get_if<DropoutModel>(&model.body)) meta["drop_prob"] = d->drop_prob;
  json tensors = json::array();
  for (const auto& [name, ptr] : named_mutable(copy, mean, inv_std)) {
    const std::string file = name + ".f32";
    write_tensor(dir / file, *ptr);
    tensors.push_back({{"name", name}, {"file", file}, {"rows", ptr->rows()}, {"cols", ptr->cols()}});
  }
  meta["tensors"] = tensors;
  meta["extra"] = extra;

  std::ofstream out(dir / "meta.json", std::ios::trunc);
  out << meta.dump(2) << '\n';
  if (!out) throw ArtifactError("cannot write " + (dir / "meta.json").string());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw ArtifactError("missing checkpoint " + (dir / "meta.json").string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw ArtifactError("corrupt meta.json: " + std::string(e.what()));
  }
  if (meta.value("format_version", 0) != kCheckpointFormatVersion) {
    throw ArtifactError("unsupported checkpoint format version");
  }
  const ModelKind kind = parse_model_kind(meta.at("model_kind").get<std::string>());
  const auto& arch = meta.at("architecture");
  const MlpShape shape{arch.at("input").get<int>(), arch.at("hidden").get<int>(), arch.at("output").get<int>()};
  const int samples = meta.at("samples").get<int>();

  AcousticModel model;
  const MlpParams zeros = MlpParams::zeros(shape);
  switch (kind) {
    case ModelKind::Fnn: model.body = FnnModel{zeros}; break;
    case ModelKind::Ensemble: model.body = EnsembleModel{std::vector<MlpParams>(static_cast<size_t>(samples), zeros)}; break;
    case ModelKind::Dropout: model.body = DropoutModel{zeros, meta.at("drop_prob").get<double>(), samples}; break;
    case ModelKind::Bnn: model.body = BnnModel{BnnPosterior{zeros, zeros}, samples}; break;
  }
  Matrix mean = RowVector::Zero(shape.input), inv_std = RowVector::Zero(shape.input);
  const auto slots = named_mutable(model, mean, inv_std);
  const auto& listed = meta.at("tensors");
  if (listed.size() != slots.size()) throw ArtifactError("checkpoint tensor list does not match model kind");
  for (size_t i = 0; i < slots.size(); ++i) {
    const auto& entry = listed[i];
    if (entry.at("name").get<std::string>() != slots[i].first) {
      throw ArtifactError("unexpected tensor " + entry.at("name").get<std::string>());
    }
    Matrix& m = *slots[i].second;
    if (entry.at("rows").get<Eigen::Index>() != m.rows() || entry.at("cols").get<Eigen::Index>() != m.cols()) {
      throw ArtifactError("tensor " + slots[i].first + " has unexpected shape");
    }
    read_tensor(dir / entry.at("file").get<std::string>(), m);
  }
  model.norm.mean = mean;
  model.norm.inv_std = inv_std;
  model.validate();
  return {std::move(model), std::move(meta)};
}

AcousticModel round_to_float32(const AcousticModel& model) {
  AcousticModel copy = model;
  Matrix mean = copy.norm.mean, inv_std = copy.norm.inv_std;
  for (auto& [name, ptr] : named_mutable(copy, mean, inv_std)) {
    *ptr = ptr->unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  }
  copy.norm.mean = mean;
  copy.norm.inv_std = inv_std;
  return copy;
}

}  // namespace uqasr
