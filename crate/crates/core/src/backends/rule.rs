//! Deterministic keyword grounding over a fixed vocabulary.

use super::{BackendError, CheckRequest, Grounded, GroundingContext, SupervisorBackend};
use crate::supervision::{
    formation_offsets, FormationTemplate, GroupSpec, Intent, Mode, Shape, VerificationVerdict,
};

const TRACK_STEMS: [&str; 4] = ["track", "follow", "escort", "pursu"];
const SEARCH_STEMS: [&str; 4] = ["search", "scan", "explor", "patrol"];
const STOP_WORDS: [&str; 4] = ["stop", "cease", "quit", "halt"];
const HOLD_WORDS: [&str; 4] = ["hover", "hold", "stay", "station"];
const EVEN_WORDS: [&str; 3] = ["evenly", "equally", "balanced"];
const TARGET_NOUNS: [&str; 6] = ["car", "target", "vehicle", "suspect", "person", "truck"];
const UNIT_WORDS: [&str; 5] = ["m", "meter", "meters", "metre", "metres"];

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBackend;

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '.'))
        .map(|w| w.trim_matches('.').to_string())
        .filter(|w| !w.is_empty())
        .collect()
}

fn has_stem(words: &[String], stems: &[&str]) -> bool {
    words.iter().any(|w| stems.iter().any(|s| w.starts_with(s)))
}

fn shape_of(word: &str) -> Option<Shape> {
    if word.starts_with("encircl") {
        return Some(Shape::Circle);
    }
    let plural_es = word.strip_suffix("es").filter(|s| s.ends_with("ss") || s.ends_with('x'));
    [Some(word), plural_es, word.strip_suffix('s')].into_iter().flatten().find_map(|w| w.parse().ok())
}

fn spacing_of(words: &[String]) -> Option<f64> {
    for (k, w) in words.iter().enumerate() {
        let (num, suffixed) = match w.strip_suffix('m') {
            Some(n) if n.parse::<f64>().is_ok() => (n, true),
            _ => (w.as_str(), false),
        };
        let Ok(value) = num.parse::<f64>() else { continue };
        if !(value.is_finite() && value > 0.0) {
            continue;
        }
        let unit_next = words.get(k + 1).is_some_and(|n| UNIT_WORDS.contains(&n.as_str()));
        let cue_before = words[k.saturating_sub(3)..k].iter().any(|p| p.starts_with("spac") || p == "apart");
        let cue_after = words.get(k + 1..(k + 3).min(words.len())).is_some_and(|s| s.iter().any(|p| p == "apart"));
        if suffixed || unit_next || cue_before || cue_after {
            return Some(value);
        }
    }
    None
}

/// Explicit target mentions such as `car2` or `target 3`, as 0-based ids.
fn mentioned_targets(words: &[String]) -> Vec<usize> {
    let mut ids = Vec::new();
    for (k, w) in words.iter().enumerate() {
        for noun in TARGET_NOUNS {
            let Some(rest) = w.strip_prefix(noun) else { continue };
            let number = if rest.is_empty() { words.get(k + 1).map(String::as_str) } else { Some(rest) };
            if let Some(n) = number.and_then(|s| s.parse::<usize>().ok()).filter(|&n| n >= 1) {
                if !ids.contains(&(n - 1)) {
                    ids.push(n - 1);
                }
            }
        }
    }
    ids
}

impl RuleBackend {
    pub fn new() -> Self {
        Self
    }

    pub fn ground_text(&self, text: &str, ctx: &GroundingContext<'_>) -> Grounded {
        let w = words(text);
        let shapes: Vec<Shape> = w.iter().filter_map(|x| shape_of(x)).collect();
        let even = w.iter().any(|x| EVEN_WORDS.contains(&x.as_str()));
        let spacing = spacing_of(&w);
        let stop = w.iter().any(|x| STOP_WORDS.contains(&x.as_str()) || x == "longer");
        let track_word = has_stem(&w, &TRACK_STEMS);
        let search_word = has_stem(&w, &SEARCH_STEMS);
        let mentions_groups = w.iter().any(|x| x.starts_with("group") || x == "each");
        let stored = ctx.stored;
        let mut warnings = Vec::new();
        let mut recognized = true;

        let mode = if track_word && stop {
            Mode::Stationary
        } else if track_word {
            Mode::Track
        } else if search_word {
            Mode::Search
        } else if let (Some(s), true, false) = (stored, mentions_groups && !shapes.is_empty(), stop) {
            s.mode
        } else {
            recognized = !shapes.is_empty() || stop || w.iter().any(|x| HOLD_WORDS.contains(&x.as_str()));
            if !recognized {
                warnings.push(format!("unrecognized command {text:?}; holding a stationary formation"));
            }
            Mode::Stationary
        };

        let inherit = stored.filter(|s| s.mode == mode && !track_word && !search_word);
        let mut intent = match inherit {
            Some(s) => {
                let mut i = s.clone();
                i.groups.iter_mut().for_each(|g| g.formation = None);
                i
            }
            None => Intent::new(mode),
        };
        intent.mode = mode;
        intent.tracking = mode == Mode::Track;
        if even {
            intent.even_split = true;
        }
        if let Some(s) = spacing {
            intent.spacing = s;
        }

        match mode {
            Mode::Track => {
                if inherit.is_none() {
                    let mut ids = mentioned_targets(&w);
                    if ids.is_empty() {
                        ids = (0..ctx.state.targets.len()).collect();
                    }
                    intent.groups = ids.into_iter().map(GroupSpec::target).collect();
                }
            }
            Mode::Search => {
                intent.search_region = intent.search_region.or(ctx.default_region);
                intent.search_target = intent.search_target.or(ctx.search_target);
            }
            Mode::Stationary => {
                if track_word && stop {
                    if let Some(s) = stored {
                        intent.formation = s.formation;
                        intent.spacing = spacing.unwrap_or(s.spacing);
                        intent.altitude_band = s.altitude_band;
                    }
                }
            }
        }

        match shapes.len() {
            0 => {}
            1 => intent.formation = shapes[0],
            _ if intent.groups.len() >= 2 => {
                for (g, s) in intent.groups.iter_mut().zip(&shapes) {
                    g.formation = Some(*s);
                }
                intent.formation = shapes[0];
            }
            _ => intent.formation = shapes[0],
        }
        Grounded { intent, warnings, recognized }
    }
}

impl SupervisorBackend for RuleBackend {
    fn name(&self) -> &'static str {
        "rule"
    }

    fn is_pure(&self) -> bool {
        true
    }

    fn ground(&mut self, text: &str, ctx: &GroundingContext<'_>) -> Result<Grounded, BackendError> {
        Ok(self.ground_text(text, ctx))
    }

    fn formation(&mut self, shape: Shape, count: usize, spacing: f64, height: f64) -> Result<FormationTemplate, BackendError> {
        Ok(formation_offsets(shape, count, spacing, height)?)
    }

    fn check(&mut self, request: &CheckRequest<'_>) -> Result<VerificationVerdict, BackendError> {
        Ok(request.deterministic.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SwarmState;
    use crate::Vec3;

    fn state(targets: usize) -> SwarmState {
        SwarmState::new(0.0, vec![Vec3::zeros(); 24], vec![Vec3::zeros(); targets])
    }

    fn ground(text: &str, stored: Option<&Intent>) -> Grounded {
        let s = state(3);
        let ctx = GroundingContext { state: &s, stored, default_region: None, search_target: None };
        RuleBackend.ground_text(text, &ctx)
    }

    #[test]
    fn convoy_grid_command() {
        let g = ground("Follow the group of cars in a grid formation", None);
        assert_eq!(g.intent.mode, Mode::Track);
        assert_eq!(g.intent.formation, Shape::Grid);
        assert_eq!(g.intent.tracked_targets(), vec![0, 1, 2]);
        assert!(!g.intent.even_split && g.warnings.is_empty());
    }

    #[test]
    fn dragnet_command() {
        let g = ground(
            "Three suspects are attempting to escape. Form a circle like a coordinated police dragnet and track all three targets.",
            None,
        );
        assert_eq!(g.intent.mode, Mode::Track);
        assert_eq!(g.intent.formation, Shape::Circle);
        assert_eq!(g.intent.groups.len(), 3);
    }

    #[test]
    fn unrecognized_falls_back_to_stationary() {
        let g = ground("hello", None);
        assert_eq!(g.intent.mode, Mode::Stationary);
        assert_eq!(g.warnings.len(), 1);
    }

    #[test]
    fn per_group_shapes_inherit_stored_intent() {
        let mut stored = Intent::track([0, 1, 2], Shape::Grid);
        stored.even_split = true;
        let g = ground("one group forms a circle, one forms a square, and one forms a cross", Some(&stored));
        assert_eq!(g.intent.mode, Mode::Track);
        assert!(g.intent.even_split);
        let shapes: Vec<Shape> = (0..3).map(|k| g.intent.group_shape(k)).collect();
        assert_eq!(shapes, vec![Shape::Circle, Shape::Square, Shape::Cross]);
    }

    #[test]
    fn stop_tracking() {
        let stored = Intent::track([0, 1, 2], Shape::Circle);
        let g = ground("Stop tracking all the targets.", Some(&stored));
        assert_eq!(g.intent.mode, Mode::Stationary);
        assert!(!g.intent.tracking);
        assert_eq!(g.intent.formation, Shape::Circle);
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn spacing_targets_and_even_split() {
        let g = ground("Escort car2 and car 3 in circles spaced 3.5 m apart, split evenly", None);
        assert_eq!(g.intent.tracked_targets(), vec![1, 2]);
        assert_eq!(g.intent.spacing, 3.5);
        assert!(g.intent.even_split);
        assert_eq!(g.intent.formation, Shape::Circle);
        assert_eq!(ground("track car1 in a line with 4m spacing", None).intent.spacing, 4.0);
        assert_eq!(ground("track car1 with 24 drones", None).intent.spacing, 2.0);
    }

    #[test]
    fn search_uses_context() {
        let s = state(2);
        let region = crate::supervision::SearchRegion::new([0.0; 3], [10.0, 10.0, 0.0]);
        let ctx = GroundingContext { state: &s, stored: None, default_region: Some(region), search_target: Some(1) };
        let g = RuleBackend.ground_text("Explore the forest and encircle the missing person", &ctx);
        assert_eq!(g.intent.mode, Mode::Search);
        assert_eq!(g.intent.search_region, Some(region));
        assert_eq!(g.intent.search_target, Some(1));
        assert_eq!(g.intent.formation, Shape::Circle);
    }

    #[test]
    fn deterministic() {
        let a = ground("Follow car1 in a cube, 3 m spacing, balanced", None);
        let b = ground("Follow car1 in a cube, 3 m spacing, balanced", None);
        assert_eq!(a, b);
    }
}
