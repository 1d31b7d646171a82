// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cvrm/common/error.hpp"
#include "cvrm/common/random.hpp"
#include "cvrm/common/text.hpp"
#include "cvrm/data/record.hpp"

namespace cvrm::data {

/// One cardiovascular risk factor of the planted signal. `match` is the
/// lowercase word sequence searched for, `display` the surface form written
/// into generated text.
struct RiskPhrase {
  std::string_view match;
  std::string_view display;
};

inline constexpr std::array<RiskPhrase, 12> kRiskLexicon = {{
    {"hypertensie", "hypertensie"},
    {"diabetes mellitus", "diabetes mellitus"},
    {"myocardinfarct", "myocardinfarct"},
    {"hypercholesterolemie", "hypercholesterolemie"},
    {"atriumfibrilleren", "atriumfibrilleren"},
    {"hartfalen", "hartfalen"},
    {"cva", "CVA"},
    {"tia", "TIA"},
    {"perifeer arterieel vaatlijden", "perifeer arterieel vaatlijden"},
    {"chronische nierschade", "chronische nierschade"},
    {"angina pectoris", "angina pectoris"},
    {"roker", "roker"},
}};

/// Words that negate a risk phrase when they occur at most this many words
/// before it within the same clause.
inline constexpr std::array<std::string_view, 2> kNegators = {"geen", "zonder"};
inline constexpr std::size_t kNegationWindow = 3;

/// Positives carry at least this many distinct affirmed risk phrases,
/// negatives at most kMaxNegativePhrases.
inline constexpr std::size_t kMinPositivePhrases = 3;
inline constexpr std::size_t kMaxNegativePhrases = 1;

struct PhraseScan {
  std::vector<std::size_t> affirmed;  ///< Lexicon indices with a non-negated mention.
  std::vector<std::size_t> negated;   ///< Lexicon indices mentioned only negated.
};

namespace detail {

struct ClauseWord {
  std::string word;
  std::size_t clause;
};

inline bool is_clause_break(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '\n';
}

inline std::vector<ClauseWord> clause_words(std::string_view s) {
  std::vector<ClauseWord> out;
  std::size_t clause = 0, i = 0;
  while (i < s.size()) {
    if (is_clause_break(s[i])) ++clause;
    if (!text::is_letter(s[i])) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < s.size() && text::is_letter(s[i])) ++i;
    out.push_back({text::to_lower(s.substr(start, i - start)), clause});
  }
  return out;
}

}  // namespace detail

/// Finds every lexicon phrase in `text` (case-insensitive, whole words) and
/// classifies it as affirmed or negated.
inline PhraseScan scan_risk_phrases(std::string_view text) {
  const auto words = detail::clause_words(text);
  std::vector<int> state(kRiskLexicon.size(), 0);  // 0 absent, 1 negated, 2 affirmed
  for (std::size_t p = 0; p < kRiskLexicon.size(); ++p) {
    const auto parts = text::split_whitespace(kRiskLexicon[p].match);
    if (parts.size() > words.size()) continue;
    for (std::size_t i = 0; i + parts.size() <= words.size(); ++i) {
      bool hit = true;
      for (std::size_t k = 0; k < parts.size() && hit; ++k)
        hit = words[i + k].word == parts[k] && words[i + k].clause == words[i].clause;
      if (!hit) continue;
      bool negated = false;
      for (std::size_t back = 1; back <= kNegationWindow && back <= i; ++back) {
        const auto& w = words[i - back];
        if (w.clause != words[i].clause) break;
        if (std::find(kNegators.begin(), kNegators.end(), w.word) != kNegators.end()) {
          negated = true;
          break;
        }
      }
      state[p] = std::max(state[p], negated ? 1 : 2);
    }
  }
  PhraseScan scan;
  for (std::size_t p = 0; p < state.size(); ++p) {
    if (state[p] == 2) scan.affirmed.push_back(p);
    else if (state[p] == 1) scan.negated.push_back(p);
  }
  return scan;
}

/// Number of distinct affirmed risk phrases.
inline std::size_t count_risk_phrases(std::string_view text) {
  return scan_risk_phrases(text).affirmed.size();
}

/// The planted labelling rule: eligible iff at least kMinPositivePhrases
/// distinct affirmed risk phrases occur in the text.
inline int planted_label(std::string_view text) {
  return count_risk_phrases(text) >= kMinPositivePhrases ? 1 : 0;
}

/// Consults concatenated oldest to newest with a single space.
inline std::string concatenated_text(const PatientRecord& r) {
  std::string out;
  for (const auto& c : r.consults) {
    if (!out.empty()) out += ' ';
    out += c.text;
  }
  return out;
}

inline int planted_label(const PatientRecord& r) { return planted_label(concatenated_text(r)); }

struct SynthResult {
  std::vector<PatientRecord> records;
  DatasetManifest manifest;
};

namespace detail {

inline constexpr std::array<std::string_view, 14> kDistractorConditions = {
    "artrose",        "osteoporose",         "cataract",          "depressie",
    "hypothyreoïdie", "prostaathypertrofie", "COPD",              "jicht",
    "anemie",         "obstipatie",          "urine-incontinentie", "slaapproblemen",
    "polyneuropathie", "maculadegeneratie"};

inline constexpr std::array<std::string_view, 10> kReferralReasons = {
    "geheugenklachten",          "valneiging",
    "verminderde mobiliteit",    "onbedoeld gewichtsverlies",
    "toenemende vermoeidheid",   "verwardheid sinds enkele weken",
    "duizeligheid bij opstaan",  "achteruitgang in zelfredzaamheid",
    "medicatiebeoordeling",      "stemmingsklachten"};

inline constexpr std::array<std::string_view, 6> kLiving = {
    "woont zelfstandig met partner",     "woont alleen in een seniorenwoning",
    "woont in een verzorgingshuis",      "woont bij dochter in",
    "woont zelfstandig met thuiszorg",   "woont met echtgenote in een appartement"};

inline constexpr std::array<std::string_view, 8> kComplaints = {
    "Klaagt over wisselende pijn in de knieën",
    "Slaapt slecht en is overdag moe",
    "Is twee keer gevallen in de afgelopen maanden",
    "Merkt dat namen en afspraken vaker vergeten worden",
    "Eetlust is verminderd",
    "Loopt met een rollator buitenshuis",
    "Heeft moeite met traplopen",
    "Ervaart weinig plezier in dagelijkse activiteiten"};

inline constexpr std::array<std::string_view, 8> kConclusions = {
    "Conclusie: kwetsbare oudere met beginnende cognitieve achteruitgang",
    "Conclusie: valrisico verhoogd door verminderde spierkracht",
    "Conclusie: polyfarmacie met mogelijke bijwerkingen",
    "Conclusie: stabiel beloop zonder nieuwe klachten",
    "Conclusie: mild cognitieve stoornis",
    "Conclusie: stemmingsstoornis met sociaal isolement",
    "Conclusie: orthostatische klachten bij dehydratie",
    "Conclusie: functionele achteruitgang na recente opname"};

inline constexpr std::array<std::string_view, 8> kPlans = {
    "Beleid: fysiotherapie voor balanstraining en controle over drie maanden",
    "Beleid: medicatie afbouwen in overleg met de huisarts",
    "Beleid: aanvullend laboratoriumonderzoek en evaluatie bij volgende afspraak",
    "Beleid: verwijzing naar de ergotherapeut voor thuissituatie",
    "Beleid: casemanager dementie ingeschakeld",
    "Beleid: valpreventie besproken met patiënt en mantelzorger",
    "Beleid: vitamine D suppletie gestart",
    "Beleid: terug naar de huisarts met schriftelijk advies"};

inline constexpr std::array<std::string_view, 10> kFirstNames = {
    "Jan", "Piet", "Maria", "Anna", "Kees", "Johanna", "Cornelis", "Hendrik", "Willem", "Elisabeth"};
inline constexpr std::array<std::string_view, 4> kParticles = {"de", "van", "van der", ""};
inline constexpr std::array<std::string_view, 10> kSurnames = {
    "Vries", "Jansen", "Bakker", "Visser", "Smit", "Meijer", "Mulder", "Bos", "Berg", "Dijk"};
inline constexpr std::array<std::string_view, 12> kMonths = {
    "januari", "februari", "maart", "april", "mei", "juni",
    "juli", "augustus", "september", "oktober", "november", "december"};

inline constexpr std::array<std::string_view, 18> kCardioMeds = {
    "C07AB02", "C07AB07", "C08CA01", "C09AA05", "C09AA02", "C09CA01",
    "C09CA03", "C10AA05", "C10AA01", "C10AA07", "B01AC06", "B01AF02",
    "C03CA01", "C03AA03", "A10BA02", "A10BB09", "C01DA14", "C03DA01"};
inline constexpr std::array<std::string_view, 16> kOtherMeds = {
    "N02BE01", "A02BC01", "A02BC02", "A06AD65", "A11CC05", "A12AX",  "N06DA02", "N06DX01",
    "N05CF01", "N06AB04", "M05BA04", "H03AA01", "G04CA02", "N06AX11", "M01AE01", "R03AC02"};

inline std::string sentence_case(std::string_view s) {
  std::string out(s);
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

inline std::string two_digits(int v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", v);
  return buf;
}

inline std::string affirmed_sentence(Rng& rng, std::string_view phrase) {
  switch (rng.below(5)) {
    case 0: return "Bekend met " + std::string(phrase) + ".";
    case 1: return "Voorgeschiedenis: " + std::string(phrase) + ".";
    case 2: return sentence_case(phrase) + " in de voorgeschiedenis.";
    case 3: return "Sinds enkele jaren " + std::string(phrase) + ".";
    default: return "Tevens bekend met " + std::string(phrase) + ".";
  }
}

inline std::string negated_sentence(Rng& rng, std::string_view phrase) {
  switch (rng.below(3)) {
    case 0: return "Geen " + std::string(phrase) + ".";
    case 1: return "Geen aanwijzingen voor " + std::string(phrase) + ".";
    default: return "Zonder " + std::string(phrase) + " in de voorgeschiedenis.";
  }
}

inline std::string person_name(Rng& rng) {
  std::string name(rng.pick(kFirstNames));
  const std::string_view particle = rng.pick(kParticles);
  if (!particle.empty()) name += " " + std::string(particle);
  name += " " + std::string(rng.pick(kSurnames));
  return name;
}

inline std::string consult_text(Rng& rng, const std::vector<std::string>& inserted,
                                const std::chrono::year_month_day& date) {
  std::vector<std::string> s;
  s.emplace_back("Consult geriatrie polikliniek.");
  s.push_back("Reden van verwijzing: " + std::string(rng.pick(kReferralReasons)) + ".");
  if (rng.bernoulli(0.4)) s.push_back("Gezien door dr. " + std::string(rng.pick(kSurnames)) + ".");
  if (rng.bernoulli(0.5))
    s.push_back("Patiënt komt samen met " + person_name(rng) + " op het spreekuur.");
  s.push_back("Anamnese: patiënt " + std::string(rng.pick(kLiving)) + ".");
  s.push_back(std::string(rng.pick(kComplaints)) + ".");
  const int n_distractors = rng.between(1, 3);
  for (int i = 0; i < n_distractors; ++i)
    s.push_back("Bekend met " + std::string(rng.pick(kDistractorConditions)) + ".");
  for (const auto& line : inserted) s.push_back(line);
  if (rng.bernoulli(0.3)) {
    const int d = rng.between(1, 28), m = rng.between(1, 12);
    s.push_back("Eerder gezien op " + two_digits(d) + "-" + two_digits(m) + "-" +
                std::to_string(static_cast<int>(date.year()) - 1) + ".");
  }
  if (rng.bernoulli(0.25)) s.push_back("Patientnummer " + std::to_string(rng.between(1000000, 9999999)) + ".");
  s.push_back("Onderzoek: RR " + std::to_string(rng.between(110, 185)) + "/" +
              std::to_string(rng.between(60, 100)) + " mmHg, pols " +
              std::to_string(rng.between(52, 96)) + " per minuut, MMSE " +
              std::to_string(rng.between(16, 30)) + "/30.");
  s.push_back(std::string(rng.pick(kConclusions)) + ".");
  s.push_back(std::string(rng.pick(kPlans)) + ".");
  if (rng.bernoulli(0.3)) {
    s.push_back("Controle gepland op " + std::to_string(rng.between(1, 28)) + " " +
                std::string(rng.pick(kMonths)) + " " +
                std::to_string(static_cast<int>(date.year()) + 1) + ".");
  }
  // Keep the header first and the plan last; shuffle the clinical middle.
  if (s.size() > 3) {
    std::span<std::string> middle(s.data() + 2, s.size() - 4);
    rng.shuffle(middle);
  }
  return text::join(s, " ");
}

}  // namespace detail

/// Generates a synthetic geriatric consult corpus with a planted label signal.
/// Exactly round(n * positive_ratio) records are positive. Label is fully
/// determined by `planted_label` over the generated text.
inline SynthResult synthesize_corpus(std::size_t n, double positive_ratio, std::uint64_t seed) {
  if (!(positive_ratio > 0.0 && positive_ratio < 1.0))
    throw ConfigError("positive_ratio must be in (0, 1), got " + std::to_string(positive_ratio));
  if (n < 10) throw ConfigError("corpus size must be >= 10, got " + std::to_string(n));

  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * positive_ratio));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng label_rng(derive_seed(seed, "synth.labels"));
  label_rng.shuffle(order);
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n_pos; ++i) labels[order[i]] = 1;

  using namespace std::chrono;
  const sys_days year_start = sys_days{year{2022} / January / 1};

  SynthResult result;
  result.records.reserve(n);
  double age_sum = 0.0, age_sq = 0.0;
  for (std::size_t idx = 0; idx < n; ++idx) {
    Rng rng(derive_seed(seed, "synth.record", idx));
    PatientRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "P%06zu", idx + 1);
    r.patient_id = id;
    r.label = labels[idx];
    r.age = static_cast<int>(std::lround(std::clamp(rng.normal(74.5, 9.3), 65.0, 100.0)));
    r.gender = rng.bernoulli(0.5373) ? Gender::male : Gender::female;

    std::vector<std::size_t> lexicon(kRiskLexicon.size());
    for (std::size_t i = 0; i < lexicon.size(); ++i) lexicon[i] = i;
    rng.shuffle(lexicon);
    const std::size_t n_affirmed = r.label == 1 ? static_cast<std::size_t>(rng.between(3, 5))
                                                : static_cast<std::size_t>(rng.between(0, 1));
    const double u = rng.uniform();
    const std::size_t n_negated = u < 0.45 ? 0 : (u < 0.8 ? 1 : 2);

    const int n_consults = rng.between(1, 4);
    std::set<int> day_set;
    while (static_cast<int>(day_set.size()) < n_consults) day_set.insert(rng.between(0, 364));
    std::vector<std::vector<std::string>> inserted(static_cast<std::size_t>(n_consults));
    for (std::size_t k = 0; k < n_affirmed; ++k) {
      const auto phrase = kRiskLexicon[lexicon[k]].display;
      const auto c = rng.below(inserted.size());
      inserted[c].push_back(detail::affirmed_sentence(rng, phrase));
      if (c + 1 < inserted.size() && rng.bernoulli(0.3))
        inserted[c + 1 + rng.below(inserted.size() - c - 1)].push_back(
            detail::affirmed_sentence(rng, phrase));
    }
    for (std::size_t k = 0; k < n_negated; ++k) {
      const auto phrase = kRiskLexicon[lexicon[n_affirmed + k]].display;
      inserted[rng.below(inserted.size())].push_back(detail::negated_sentence(rng, phrase));
    }
    std::size_t c = 0;
    for (int day : day_set) {
      const year_month_day ymd{year_start + days{day}};
      char date[16];
      std::snprintf(date, sizeof date, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      r.consults.push_back({date, detail::consult_text(rng, inserted[c], ymd)});
      ++c;
    }

    const double cardio_share = r.label == 1 ? 0.7 : 0.3;
    const int n_meds = r.label == 1 ? rng.between(2, 6) : rng.between(0, 5);
    std::set<std::string> meds;
    for (int m = 0; m < n_meds; ++m) {
      meds.insert(std::string(rng.bernoulli(cardio_share) ? rng.pick(detail::kCardioMeds)
                                                           : rng.pick(detail::kOtherMeds)));
    }
    for (const auto& code : meds) r.medications.push_back({code, std::nullopt});

    age_sum += r.age;
    age_sq += static_cast<double>(r.age) * r.age;
    if (r.gender == Gender::male) ++result.manifest.male_count;
    result.records.push_back(std::move(r));
  }

  auto& m = result.manifest;
  m.record_count = n;
  m.positive_count = n_pos;
  m.generator_seed = seed;
  m.age_mean = age_sum / static_cast<double>(n);
  m.age_std = std::sqrt(std::max(0.0, age_sq / static_cast<double>(n) - m.age_mean * m.age_mean));
  return result;
}

}  // namespace cvrm::data
