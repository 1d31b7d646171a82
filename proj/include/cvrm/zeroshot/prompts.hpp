// Copyright 2026 The cvrm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvrm/common/error.hpp"
#include "cvrm/common/text.hpp"
#include "cvrm/data/record.hpp"
#include "cvrm/zeroshot/deid.hpp"

namespace cvrm::zeroshot {

inline constexpr std::string_view kSummaryPlaceholder = "[SUMMARY OF CVRM GUIDELINES]";

inline constexpr std::string_view kSystemTemplate =
    "You are a faithful and truthful label extractor in the cardio/geriatrics domain. You are an expert in "
    "cardiovascular risk management. You assign people to the cardiovascular risk management regime based on "
    "the Dutch guidelines. This is an extract of the CVRM guidelines: [SUMMARY OF CVRM GUIDELINES]";

inline constexpr std::string_view kTranslationPrompt = "Translate this Dutch geriatrics consult to English.";

inline constexpr std::string_view kExtractionPrompt =
    "We want to know whether the patient, based on this medical consult text and the CVRM guidelines, has an "
    "elevated risk for cardiovascular disease. Only respond with yes / no.";

/// Extractive summary of the CVRM guidelines appended to the system prompt.
inline constexpr std::string_view kGuidelineSummary = R"(## Core CVRM factors commonly documented in patient consults

### Demographics
- Age
- Sex

### Symptoms / Clinical presentation
- Chest pain / angina
- Dyspnea
- Palpitations (e.g. atrial fibrillation)
- Neurological deficits / TIA / stroke symptoms
- Claudication (peripheral arterial disease)
- Signs of heart failure

### Prior history (established disease)
- Documented atherosclerotic cardiovascular disease
  (coronary artery disease, myocardial infarction, stroke/TIA,
  peripheral arterial disease, aortic aneurysm)
- Diabetes mellitus (type 1 or 2; duration, complications)
- Chronic kidney disease (eGFR, albuminuria)
- Familial hypercholesterolemia
- Atrial fibrillation
- Heart failure
- Hypertension
- Prior revascularization or vascular procedures

### Risk factors (anamnestic)
- Smoking status (current/former, pack-years)
- Family history of premature cardiovascular disease
- Diet quality
- Physical inactivity / sedentary behavior
- Alcohol use
- Psychosocial stress, depression, low socioeconomic status

### Risk factors (clinical / measurements)
- Systolic blood pressure
- Body mass index (BMI)
- Waist circumference

### Laboratory factors
- LDL-cholesterol
- Non-HDL-cholesterol
- Total cholesterol
- HDL-cholesterol
- Triglycerides
- Fasting glucose
- Serum creatinine / eGFR
- Urine albumin–creatinine ratio

### Risk scores
- SCORE2 (ages 40–70)
- SCORE2-OP (ages 70–90)
- SMART2 / SMART-REACH (established cardiovascular disease)
- DIAL2 (diabetes mellitus)

### Risk modifiers / additional factors
- Coronary artery calcium score
- Psychosocial factors
- Ethnic background
- Chronic inflammatory diseases
  (rheumatoid arthritis, psoriatic arthritis, ankylosing spondylitis)
- COPD
- Gout
- HIV infection
- Inflammatory bowel disease
- Obstructive sleep apnea
- History of pre-eclampsia or pregnancy-related hypertension
- Severe psychiatric disorders
- Prior chemo- or radiotherapy

### Treatment-related context often noted
- Current antihypertensive therapy
- Current lipid-lowering therapy (statins, ezetimibe, PCSK9 inhibitors)
- Blood pressure target attainment
- LDL-C target attainment
- Medication adherence
- Polypharmacy and frailty (especially in older adults)
)";

enum class Role { system, user, assistant };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

inline nlohmann::ordered_json to_json(const std::vector<ChatMessage>& messages) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& m : messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

struct PromptBundle {
  ChatMessage system;
  ChatMessage translation_request;
  ChatMessage extraction_request;
  std::string guideline_summary;

  std::vector<ChatMessage> translation_conversation() const { return {system, translation_request}; }

  /// The second call: the first exchange followed by the extraction request.
  std::vector<ChatMessage> extraction_conversation(const std::string& translation) const {
    return {system, translation_request, {Role::assistant, translation}, extraction_request};
  }
};

inline std::string system_prompt(std::string_view summary) {
  std::string s(kSystemTemplate);
  s.replace(s.find(kSummaryPlaceholder), kSummaryPlaceholder.size(), std::string(summary));
  return s;
}

/// Header line "Age: {age}. Gender: {M|F}." prepended to the consults.
inline std::string patient_header(const data::PatientRecord& r) {
  return "Age: " + std::to_string(r.age) + ". Gender: " + std::string(data::gender_code(r.gender)) + ".";
}

/// Consult texts must already be de-identified.
inline PromptBundle build_prompts(const data::PatientRecord& r, std::string_view summary = kGuidelineSummary) {
  if (r.consults.empty()) throw ValidationError("consults", "record " + r.patient_id + " has no consults");
  std::vector<std::string> consults;
  for (const auto& c : r.consults) consults.push_back(c.text);
  PromptBundle b;
  b.guideline_summary = std::string(summary);
  b.system = {Role::system, system_prompt(summary)};
  b.translation_request = {Role::user, std::string(kTranslationPrompt) + "\n\n" + patient_header(r) + "\n\n" +
                                           text::join(consults, "\n\n")};
  b.extraction_request = {Role::user, std::string(kExtractionPrompt)};
  return b;
}

/// Copy of the record with every consult text masked.
inline data::PatientRecord deidentified(const data::PatientRecord& r) {
  data::PatientRecord out = r;
  for (auto& c : out.consults) c.text = deidentify(c.text);
  return out;
}

}  // namespace cvrm::zeroshot
