#include "motionsurv/model_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "motionsurv/errors.hpp"

namespace motionsurv {
namespace {

using nlohmann::json;

// Storage is column-major; documents list elements row by row.
Eigen::Index storage_index(const TensorView& t, Eigen::Index k) {
    return (k % t.cols) * t.rows + k / t.cols;
}

std::vector<double> row_major(const TensorView& t) {
    std::vector<double> out(static_cast<std::size_t>(t.size()));
    for (Eigen::Index k = 0; k < t.size(); ++k) out[static_cast<std::size_t>(k)] = t.data[storage_index(t, k)];
    return out;
}

json tensors_to_json(const NetworkParameters& p) {
    json arr = json::array();
    for (const auto& t : p.tensors()) {
        arr.push_back({{"name", t.name},
                       {"shape", {t.rows, t.cols}},
                       {"data", row_major(t)}});
    }
    return arr;
}

template <class Fetch>
void tensors_from_json(const json& arr, NetworkParameters& p, Fetch&& fetch) {
    auto views = p.tensors();
    if (!arr.is_array() || arr.size() != views.size()) throw InputError("model: wrong number of tensors");
    for (std::size_t i = 0; i < views.size(); ++i) {
        const json& t = arr[i];
        if (t.at("name").get<std::string>() != views[i].name) {
            throw InputError("model: expected tensor '" + std::string(views[i].name) + "'");
        }
        const auto shape = t.at("shape").get<std::array<Eigen::Index, 2>>();
        if (shape[0] != views[i].rows || shape[1] != views[i].cols) {
            throw InputError("model: tensor '" + std::string(views[i].name) + "' has the wrong shape");
        }
        fetch(t, views[i]);
    }
}

void read_inline(const json& t, TensorView& view) {
    const auto& data = t.at("data");
    if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != view.size()) {
        throw InputError("model: tensor '" + std::string(view.name) + "' has the wrong element count");
    }
    for (Eigen::Index i = 0; i < view.size(); ++i) view.data[storage_index(view, i)] = data[static_cast<std::size_t>(i)].get<double>();
}

}  // namespace

json spec_to_json(const NetworkSpec& s) {
    return {{"input_dim", s.input_dim},       {"hidden_units", s.hidden_units},
            {"latent_dim", s.latent_dim},     {"dropout_rate", s.dropout_rate},
            {"alpha", s.alpha},               {"l1_penalty", s.l1_penalty},
            {"learning_rate", s.learning_rate}};
}

NetworkSpec spec_from_json(const json& j) {
    NetworkSpec s;
    try {
        s.input_dim = j.at("input_dim").get<std::size_t>();
        s.hidden_units = j.at("hidden_units").get<std::size_t>();
        s.latent_dim = j.at("latent_dim").get<std::size_t>();
        s.dropout_rate = j.at("dropout_rate").get<double>();
        s.alpha = j.at("alpha").get<double>();
        s.l1_penalty = j.at("l1_penalty").get<double>();
        s.learning_rate = j.at("learning_rate").get<double>();
    } catch (const json::exception& e) {
        throw InputError(std::string("model spec: ") + e.what());
    }
    s.validate();
    return s;
}

json model_to_json(const NetworkModel& model) {
    return {{"format", "motionsurv-model"},
            {"format_version", kModelFormatVersion},
            {"spec", spec_to_json(model.spec)},
            {"tensors", tensors_to_json(model.params)},
            {"adam",
             {{"step", model.adam.step},
              {"first_moment", tensors_to_json(model.adam.first_moment)},
              {"second_moment", tensors_to_json(model.adam.second_moment)}}}};
}

namespace {

template <class Fetch>
NetworkModel model_from_document(const json& j, Fetch&& fetch) {
    try {
        if (j.at("format").get<std::string>() != "motionsurv-model") throw InputError("model: unknown format");
        const int version = j.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw InputError("model: unsupported format_version " + std::to_string(version));
        }
        NetworkModel m = NetworkModel::zeros(spec_from_json(j.at("spec")));
        tensors_from_json(j.at("tensors"), m.params, fetch);
        if (j.contains("adam")) {
            const json& adam = j.at("adam");
            m.adam.step = adam.at("step").get<std::int64_t>();
            tensors_from_json(adam.at("first_moment"), m.adam.first_moment, fetch);
            tensors_from_json(adam.at("second_moment"), m.adam.second_moment, fetch);
        }
        if (!m.params.all_finite()) throw InputError("model: non-finite parameter");
        return m;
    } catch (const json::exception& e) {
        throw InputError(std::string("model: ") + e.what());
    }
}

}  // namespace

NetworkModel model_from_json(const json& j) { return model_from_document(j, read_inline); }

void save_model(const std::filesystem::path& path, const NetworkModel& model) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << model_to_json(model).dump() << '\n';
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

void save_model_with_sidecar(const std::filesystem::path& path, const NetworkModel& model) {
    std::filesystem::path bin_path = path;
    bin_path += ".bin";
    std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
    if (!bin) throw InputError("cannot open '" + bin_path.string() + "' for writing");

    std::size_t offset = 0;
    auto emit = [&](const NetworkParameters& p) {
        json arr = json::array();
        for (const auto& t : p.tensors()) {
            arr.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", offset}});
            for (Eigen::Index i = 0; i < t.size(); ++i) {
                std::uint64_t bits = 0;
                std::memcpy(&bits, &t.data[storage_index(t, i)], sizeof bits);
                std::array<char, 8> bytes{};
                for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
                bin.write(bytes.data(), 8);
            }
            offset += static_cast<std::size_t>(t.size());
        }
        return arr;
    };

    json doc = {{"format", "motionsurv-model"},
                {"format_version", kModelFormatVersion},
                {"spec", spec_to_json(model.spec)},
                {"sidecar", bin_path.filename().string()}};
    doc["tensors"] = emit(model.params);
    doc["adam"] = {{"step", model.adam.step},
                   {"first_moment", emit(model.adam.first_moment)},
                   {"second_moment", emit(model.adam.second_moment)}};
    if (!bin) throw InputError("failed writing '" + bin_path.string() + "'");

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << doc.dump() << '\n';
}

NetworkModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "' for reading");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("model '" + path.string() + "': " + e.what());
    }
    if (!doc.contains("sidecar")) return model_from_json(doc);

    const auto bin_path = path.parent_path() / doc.at("sidecar").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw InputError("cannot open model sidecar '" + bin_path.string() + "'");
    const std::vector<char> payload((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    return model_from_document(doc, [&](const json& t, TensorView& view) {
        const auto offset = t.at("offset").get<std::size_t>();
        if ((offset + static_cast<std::size_t>(view.size())) * 8 > payload.size()) {
            throw InputError("model sidecar: tensor '" + std::string(view.name) + "' out of range");
        }
        for (Eigen::Index i = 0; i < view.size(); ++i) {
            std::uint64_t bits = 0;
            const std::size_t base = (offset + static_cast<std::size_t>(i)) * 8;
            for (int b = 0; b < 8; ++b) {
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[base + b])) << (8 * b);
            }
            std::memcpy(&view.data[storage_index(view, i)], &bits, sizeof bits);
        }
    });
}

}  // namespace motionsurv
