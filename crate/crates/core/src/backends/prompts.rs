//! Prompt texts sent to a chat-completion endpoint. The wording is part of the
//! wire contract with the model and is kept as published.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptName {
    MotionDescriptor,
    FormationInstruction,
    AutoCorrection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: PromptName,
    pub text: &'static str,
    pub placeholders: &'static [&'static str],
    pub output: OutputFormat,
}

const MOTION_DESCRIPTOR: &str = r#"You are an instruction parser for a multi-agent control system.

Rules:

1. "mode":
- "track" if the user mentions tracking, following, escorting, or maintaining formation around moving targets.
- "search" if the user mentions searching, scanning, exploring, or patrolling.
- "stationary" otherwise.

2. "tracking":
- true if mode is "track".
- false otherwise.

3. Each "group" corresponds to one target mentioned by the user (e.g. car1, car2).

4. "formation":
- Use the shape mentioned by the user.
- Use "grid" if not specified.

5. "even_split":
- true only if the user explicitly says "evenly", "equally", or "balanced".
- false otherwise.

6. "spacing":
- Use the number if provided.
- Default to 2 if not specified.

Output JSON only. No extra text.

USER INSTRUCTION: {USER_TEXT}"#;

const FORMATION_INSTRUCTION: &str = r#"You are a formation geometry generator.

Your task is to output 3D formation offsets (x,y,z) for N drones,
relative to the formation center at (0,0) and at a height offset z above the ground.

Input:
- Formation shape (e.g., circle, square, grid, cross, spiral).
- Number of drones N.
- Optional spacing (meters), default is 1.0 meter.
- Optional height offset z (meters above ground), default is 0.

Rules:
- Output exactly N points.
- Points are relative offsets from the formation center (0,0).
- z represents the vertical offset above the ground.
- Use simple geometry consistent with the requested shape.
- If spacing is given, neighboring drones should be approximately spacing meters apart.
- Do not place multiple drones at the same location.

Output format (CSV only, no extra text):

id,x,y,z
0,x0,y0,z0
1,x1,y1,z1
...

Only output the table.

Formation shape: {SHAPE}
Number of drones N: {N}
Spacing: {SPACING}
Height offset z: {HEIGHT}"#;

const AUTO_CORRECTION: &str = r##"You are a multi-agent formation checker.

Goal:
Decide if the current drone formation meets the user’s intent or if it should be revised.

INPUT:
1) USER INSTRUCTION: {USER_TEXT}
- Describes desired formation/behavior.

2) CURRENT FORMATION (CSV): {FEEDBACK_CSV}

- One or multiple groups.
- Groups separated by lines starting with "# group" or "---".
- Coordinates are 3D relative positions: id,x,y,z

CHECK:
Compare the user instruction with the current coordinates.
Consider:
- Formation shape (grid, circle, line, cluster)
- Group separation (if multiple targets implied)
- Rough symmetry/alignment
Small numeric deviations should NOT trigger revision.

OUTPUT (STRICT JSON ONLY):
{
  "feedback": true/false,
  "reason": "Short explanation (1-2 sentences)"
}

Examples:
{"feedback": false, "reason": "Grid matches user request."}
{"feedback": true, "reason": "One cluster but multiple groups requested."}"##;

impl PromptTemplate {
    pub fn get(name: PromptName) -> &'static PromptTemplate {
        match name {
            PromptName::MotionDescriptor => &TEMPLATES[0],
            PromptName::FormationInstruction => &TEMPLATES[1],
            PromptName::AutoCorrection => &TEMPLATES[2],
        }
    }

    /// `{NAME}` tokens present in the text.
    pub fn tokens(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut rest = self.text;
        while let Some(i) = rest.find('{') {
            rest = &rest[i + 1..];
            if let Some(j) = rest.find('}') {
                let inner = &rest[..j];
                if !inner.is_empty() && inner.chars().all(|c| c.is_ascii_uppercase() || c == '_') {
                    out.insert(inner.to_string());
                }
            }
        }
        out
    }

    pub fn render(&self, fills: &BTreeMap<&str, String>) -> Result<String, BackendError> {
        let want: BTreeSet<&str> = self.placeholders.iter().copied().collect();
        let got: BTreeSet<&str> = fills.keys().copied().collect();
        if want != got {
            return Err(BackendError::Prompt(format!("{:?} expects {want:?}, got {got:?}", self.name)));
        }
        let mut text = self.text.to_string();
        for (k, v) in fills {
            text = text.replace(&format!("{{{k}}}"), v);
        }
        Ok(text)
    }
}

pub static TEMPLATES: [PromptTemplate; 3] = [
    PromptTemplate {
        name: PromptName::MotionDescriptor,
        text: MOTION_DESCRIPTOR,
        placeholders: &["USER_TEXT"],
        output: OutputFormat::Json,
    },
    PromptTemplate {
        name: PromptName::FormationInstruction,
        text: FORMATION_INSTRUCTION,
        placeholders: &["HEIGHT", "N", "SHAPE", "SPACING"],
        output: OutputFormat::Csv,
    },
    PromptTemplate {
        name: PromptName::AutoCorrection,
        text: AUTO_CORRECTION,
        placeholders: &["FEEDBACK_CSV", "USER_TEXT"],
        output: OutputFormat::Json,
    },
];
