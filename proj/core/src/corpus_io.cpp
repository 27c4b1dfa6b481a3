#include <fstream>

#include <nlohmann/json.hpp>

#include "convmfit/corpus.hpp"
#include "convmfit/errors.hpp"

namespace convmfit {

using nlohmann::json;

void write_dialogues(const std::string& path, const std::vector<Dialogue>& dialogues,
                     bool with_labels) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  for (const auto& d : dialogues) {
    json turns = json::array();
    for (const auto& turn : d.turns) {
      json utts = json::array();
      for (const auto& u : turn.utterances) {
        json ju{{"text", u.text}};
        if (with_labels && !u.labels.empty()) {
          json labels = json::array();
          for (Label l : u.labels) labels.push_back(label_name(l));
          ju["labels"] = labels;
        }
        utts.push_back(std::move(ju));
      }
      turns.push_back(json{{"role", role_name(turn.role)}, {"utterances", std::move(utts)}});
    }
    out << json{{"id", d.id}, {"turns", std::move(turns)}}.dump() << '\n';
  }
}

std::vector<Dialogue> read_dialogues(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<Dialogue> dialogues;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Dialogue d;
    d.id = j.at("id").get<std::string>();
    for (const auto& jt : j.at("turns")) {
      Turn turn;
      const auto role = jt.at("role").get<std::string>();
      if (role == "counselor") {
        turn.role = Role::kCounselor;
      } else if (role == "client") {
        turn.role = Role::kClient;
      } else {
        throw FormatError(path + ":" + std::to_string(lineno) + ": unknown role '" + role + "'");
      }
      for (const auto& ju : jt.at("utterances")) {
        Utterance u;
        u.text = ju.at("text").get<std::string>();
        u.role = turn.role;
        if (ju.contains("labels")) {
          if (turn.role == Role::kCounselor) {
            throw FormatError(path + ":" + std::to_string(lineno) +
                              ": counselor utterances never carry labels");
          }
          for (const auto& jl : ju.at("labels")) {
            const auto name = jl.get<std::string>();
            const auto l = label_from_name(name);
            if (!l) {
              throw FormatError(path + ":" + std::to_string(lineno) +
                                ": unknown label '" + name + "'");
            }
            u.labels.push_back(*l);
          }
          if (u.labels.empty()) {
            throw FormatError(path + ":" + std::to_string(lineno) +
                              ": labeled utterance must have >= 1 label");
          }
        }
        turn.utterances.push_back(std::move(u));
      }
      if (turn.utterances.empty()) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": empty turn");
      }
      d.turns.push_back(std::move(turn));
    }
    if (d.turns.empty()) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": empty dialogue");
    }
    dialogues.push_back(std::move(d));
  }
  return dialogues;
}

}  // namespace convmfit
