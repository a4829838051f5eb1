//! Question templates: rendering slot fillers to text and programs, and the
//! exact inverse mapping from generated text back to programs.
//!
//! A template has a text pattern with slots such as `_SA_` and a program
//! pattern in which `_X_[inner]` wraps `inner` with the fragment filler of
//! slot `X` (its `$` marks where `inner` goes). Fillers are pure functions of
//! the slot words, so the program is recovered exactly from the text.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::model::{Color, EventKind, Material, QuestionType};
use crate::program::{parse_program, ParseError, Program};

/// Slot name to the words filling it; an empty string marks an omitted optional slot.
pub type Slots = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub id: &'static str,
    pub qtype: QuestionType,
    pub text_pattern: &'static str,
    pub program_pattern: &'static str,
    /// Slots that may be left empty.
    pub optional: &'static [&'static str],
}

pub const TEMPLATES: &[Template] = &[
    Template {
        id: "query",
        qtype: QuestionType::Factual,
        text_pattern: "What is the _H_ of the _DA_ _SA_ that is _PA_?",
        program_pattern: "(query_attribute (unique _PA_[_DA_[_SA_[(objects)]]]) _H_)",
        optional: &["DA"],
    },
    Template {
        id: "exist",
        qtype: QuestionType::Factual,
        text_pattern: "Are there any _PA_ _DA_ _SAS_ _TI_?",
        program_pattern: "(exist _PA_[_DA_[_SAS_[(objects)]]])",
        optional: &["PA", "DA", "TI"],
    },
    Template {
        id: "count",
        qtype: QuestionType::Factual,
        text_pattern: "How many _PA_ _DA_ _SAS_ are there _TI_?",
        program_pattern: "(count _PA_[_DA_[_SAS_[(objects)]]])",
        optional: &["PA", "DA", "TI"],
    },
    Template {
        id: "mass_heavier",
        qtype: QuestionType::Factual,
        text_pattern: "Is the _SA1_ heavier than the _SA2_?",
        program_pattern: "(is_heavier (unique _SA1_[(objects)]) (unique _SA2_[(objects)]))",
        optional: &[],
    },
    Template {
        id: "mass_lighter",
        qtype: QuestionType::Factual,
        text_pattern: "Is the _SA1_ lighter than the _SA2_?",
        program_pattern: "(is_lighter (unique _SA1_[(objects)]) (unique _SA2_[(objects)]))",
        optional: &[],
    },
    Template {
        id: "charge_opposite",
        qtype: QuestionType::Factual,
        text_pattern: "Are the _SA1_ and the _SA2_ oppositely charged?",
        program_pattern:
            "(is_opposite_charged (unique _SA1_[(objects)]) (unique _SA2_[(objects)]))",
        optional: &[],
    },
    Template {
        id: "charge_same",
        qtype: QuestionType::Factual,
        text_pattern: "Are the _SA1_ and the _SA2_ with the same type of charge?",
        program_pattern: "(is_same_charged (unique _SA1_[(objects)]) (unique _SA2_[(objects)]))",
        optional: &[],
    },
    Template {
        id: "query_both",
        qtype: QuestionType::Factual,
        text_pattern: "What are the _HS_ of the two objects that are charged?",
        program_pattern: "(query_both_attribute (filter_charged (objects)) _HS_)",
        optional: &[],
    },
    Template {
        id: "counterfactual_mass",
        qtype: QuestionType::CounterfactualMass,
        text_pattern: "If the _SA_ were _MP_, _Q_?",
        program_pattern: "(_MP_ (unique _SA_[(objects)]))",
        optional: &[],
    },
    Template {
        id: "counterfactual_charge",
        qtype: QuestionType::CounterfactualCharge,
        text_pattern: "If the _SA_ were _CP_, _Q_?",
        program_pattern: "(_CP_ (unique _SA_[(objects)]))",
        optional: &[],
    },
    Template {
        id: "predictive",
        qtype: QuestionType::Predictive,
        text_pattern: "What will happen next?",
        program_pattern: "(unseen_events)",
        optional: &[],
    },
];

/// Choice phrasing per interaction kind.
pub const CHOICE_PATTERNS: &[(EventKind, &str)] = &[
    (EventKind::Collision, "the _SA1_ collides with the _SA2_"),
    (
        EventKind::Attraction,
        "the _SA1_ and the _SA2_ attract each other",
    ),
    (
        EventKind::Repulsion,
        "the _SA1_ and the _SA2_ repel each other",
    ),
];

const CHOICE_PROGRAM: &str =
    "_Q_[(exist (filter_event (filter_event (filter_kind _WORLD_ _KIND_) _SA1_[(objects)]) _SA2_[(objects)]))]";

pub const TI_BEGIN: &str = "when the video begins";
pub const TI_END: &str = "when the video ends";
pub const Q_HAPPEN: &str = "which event would happen";
pub const Q_NOT_HAPPEN: &str = "which event would not happen";

#[derive(Debug, Error)]
pub enum NlError {
    #[error("no template matches question `{0}`")]
    NoTemplate(String),
    #[error("no choice pattern matches `{0}`")]
    NoChoicePattern(String),
    #[error("question `{0}` is not multiple-choice")]
    NotMultipleChoice(String),
    #[error("template produced an invalid program: {0}")]
    Program(#[from] ParseError),
}

pub fn template(id: &str) -> Option<&'static Template> {
    TEMPLATES.iter().find(|t| t.id == id)
}

/// Slot kind: the name without its trailing index (`SA1` -> `SA`).
fn kind(name: &str) -> &str {
    name.trim_end_matches(|c: char| c.is_ascii_digit())
}

fn alternatives(kind: &str) -> String {
    let colors = Color::ALL
        .iter()
        .map(|c| c.as_str())
        .collect::<Vec<_>>()
        .join("|");
    let materials = Material::ALL
        .iter()
        .map(|m| m.as_str())
        .collect::<Vec<_>>()
        .join("|");
    match kind {
        "SA" => format!("(?:(?:{colors}) )?(?:(?:{materials}) )?(?:cube|sphere|cylinder|object)"),
        "SAS" => {
            format!("(?:(?:{colors}) )?(?:(?:{materials}) )?(?:cubes|spheres|cylinders|objects)")
        }
        "DA" => "moving|stationary".into(),
        "PA" => "heavy|light|charged|uncharged".into(),
        "H" => "color|shape|material".into(),
        "HS" => "colors|shapes|materials".into(),
        "TI" => format!("{TI_BEGIN}|{TI_END}"),
        "MP" => "heavier|lighter".into(),
        "CP" => "uncharged|oppositely charged".into(),
        "Q" => format!("{Q_HAPPEN}|{Q_NOT_HAPPEN}"),
        other => panic!("unknown slot kind {other}"),
    }
}

/// Program fragment for one slot. `$` marks the wrapped input.
fn filler(kind: &str, words: &str) -> String {
    match kind {
        "SA" | "SAS" => {
            let mut out = "$".to_string();
            let mut parts: Vec<&str> = words.split(' ').collect();
            parts.pop();
            for w in parts {
                out = format!("(filter_static_attr {out} {w})");
            }
            let noun = words.rsplit(' ').next().unwrap_or("");
            let noun = if kind == "SAS" {
                noun.trim_end_matches('s')
            } else {
                noun
            };
            if noun != "object" {
                out = format!("(filter_static_attr {out} {noun})");
            }
            out
        }
        "DA" if words.is_empty() => "$".into(),
        "DA" => format!("(filter_dynamic_attr $ {words} _TI_)"),
        "PA" if words.is_empty() => "$".into(),
        "PA" => format!("(filter_{words} $)"),
        "TI" if words == TI_END => "(get_frame (end))".into(),
        "TI" => "(get_frame (start))".into(),
        "H" => words.into(),
        "HS" => words.trim_end_matches('s').into(),
        "MP" if words == "heavier" => "counterfactual_mass_heavy".into(),
        "MP" => "counterfactual_mass_light".into(),
        "CP" if words == "uncharged" => "counterfactual_uncharged".into(),
        "CP" => "counterfactual_opposite_charged".into(),
        "Q" if words == Q_NOT_HAPPEN => "(negate $)".into(),
        "Q" => "$".into(),
        // verbatim slots used by choice programs
        "WORLD" | "KIND" => words.into(),
        other => panic!("unknown slot kind {other}"),
    }
}

fn slot_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"_([A-Z]+[0-9]?)_").unwrap())
}

/// Expands a program pattern with the given slot words.
pub fn expand(pattern: &str, slots: &Slots) -> String {
    let re = slot_regex();
    let mut out = String::new();
    let mut rest = pattern;
    while let Some(m) = re.captures(rest) {
        let whole = m.get(0).unwrap();
        let name = &m[1];
        out.push_str(&rest[..whole.start()]);
        rest = &rest[whole.end()..];
        let words = slots.get(name).map(String::as_str).unwrap_or("");
        let mut fragment = filler(kind(name), words);
        if let Some(after) = rest.strip_prefix('[') {
            let close = matching_bracket(after);
            let inner = expand(&after[..close], slots);
            fragment = fragment.replace('$', &inner);
            rest = &after[close + 1..];
        }
        out.push_str(&expand(&fragment, slots));
    }
    out.push_str(rest);
    out
}

fn matching_bracket(text: &str) -> usize {
    let mut depth = 0;
    for (i, c) in text.char_indices() {
        match c {
            '[' => depth += 1,
            ']' if depth == 0 => return i,
            ']' => depth -= 1,
            _ => {}
        }
    }
    panic!("unbalanced program pattern");
}

/// Pattern broken into literals and slots; optional slots own one adjacent space.
#[derive(Debug, Clone)]
enum Piece {
    Lit(String),
    Slot {
        name: String,
        optional: bool,
        lead: bool,
        trail: bool,
    },
}

fn layout(pattern: &str, optional: &[&str]) -> Vec<Piece> {
    let re = slot_regex();
    let mut pieces = Vec::new();
    let mut last = 0;
    for m in re.captures_iter(pattern) {
        let whole = m.get(0).unwrap();
        pieces.push(Piece::Lit(pattern[last..whole.start()].to_string()));
        pieces.push(Piece::Slot {
            name: m[1].to_string(),
            optional: optional.contains(&&m[1]),
            lead: false,
            trail: false,
        });
        last = whole.end();
    }
    pieces.push(Piece::Lit(pattern[last..].to_string()));

    for i in 0..pieces.len() {
        let is_optional = matches!(&pieces[i], Piece::Slot { optional: true, .. });
        if !is_optional {
            continue;
        }
        let next_space = matches!(&pieces[i + 1], Piece::Lit(s) if s.starts_with(' '));
        if next_space {
            if let Piece::Lit(s) = &mut pieces[i + 1] {
                s.remove(0);
            }
            if let Piece::Slot { trail, .. } = &mut pieces[i] {
                *trail = true;
            }
        } else if let Piece::Lit(s) = &mut pieces[i - 1] {
            if s.ends_with(' ') {
                s.pop();
                if let Piece::Slot { lead, .. } = &mut pieces[i] {
                    *lead = true;
                }
            }
        }
    }
    pieces
}

/// Fills a text pattern.
pub fn render_text(pattern: &str, optional: &[&str], slots: &Slots) -> String {
    let mut out = String::new();
    for p in layout(pattern, optional) {
        match p {
            Piece::Lit(s) => out.push_str(&s),
            Piece::Slot {
                name, lead, trail, ..
            } => {
                let words = slots.get(&name).map(String::as_str).unwrap_or("");
                if !words.is_empty() {
                    if lead {
                        out.push(' ');
                    }
                    out.push_str(words);
                    if trail {
                        out.push(' ');
                    }
                }
            }
        }
    }
    out
}

fn pattern_regex(pattern: &str, optional: &[&str]) -> Regex {
    let mut re = String::from("^");
    for p in layout(pattern, optional) {
        match p {
            Piece::Lit(s) => re.push_str(&regex::escape(&s)),
            Piece::Slot {
                name,
                optional,
                lead,
                trail,
            } => {
                let group = format!("(?P<{name}>{})", alternatives(kind(&name)));
                let body = format!(
                    "{}{group}{}",
                    if lead { " " } else { "" },
                    if trail { " " } else { "" }
                );
                if optional {
                    re.push_str(&format!("(?:{body})?"));
                } else {
                    re.push_str(&body);
                }
            }
        }
    }
    re.push('$');
    Regex::new(&re).expect("template regex")
}

fn captures(re: &Regex, text: &str) -> Option<Slots> {
    let caps = re.captures(text)?;
    Some(
        re.capture_names()
            .flatten()
            .map(|n| {
                (
                    n.to_string(),
                    caps.name(n)
                        .map(|m| m.as_str().to_string())
                        .unwrap_or_default(),
                )
            })
            .collect(),
    )
}

fn template_regexes() -> &'static [(Template, Regex)] {
    static RES: OnceLock<Vec<(Template, Regex)>> = OnceLock::new();
    RES.get_or_init(|| {
        TEMPLATES
            .iter()
            .map(|t| (*t, pattern_regex(t.text_pattern, t.optional)))
            .collect()
    })
}

fn choice_regexes() -> &'static [(EventKind, Regex)] {
    static RES: OnceLock<Vec<(EventKind, Regex)>> = OnceLock::new();
    RES.get_or_init(|| {
        CHOICE_PATTERNS
            .iter()
            .map(|(k, p)| (*k, pattern_regex(p, &[])))
            .collect()
    })
}

/// Text and program of a question instance.
pub fn instantiate(t: &Template, slots: &Slots) -> Result<(String, Program), NlError> {
    let text = render_text(t.text_pattern, t.optional, slots);
    let program = parse_program(&expand(t.program_pattern, slots))?;
    Ok((text, program))
}

/// Text and program of one choice. `stem` is the question's program (the
/// event list the choice is checked against) and `q` its `_Q_` words, if any.
pub fn instantiate_choice(
    stem: &Program,
    q: &str,
    kind: EventKind,
    slots: &Slots,
) -> Result<(String, Program), NlError> {
    let pattern = CHOICE_PATTERNS
        .iter()
        .find(|(k, _)| *k == kind)
        .map(|(_, p)| *p)
        .expect("interaction kind");
    let text = render_text(pattern, &[], slots);
    let mut all = slots.clone();
    all.insert("WORLD".into(), stem.to_string());
    all.insert("KIND".into(), kind.as_str().into());
    all.insert("Q".into(), q.into());
    let program = parse_program(&expand(CHOICE_PROGRAM, &all))?;
    Ok((text, program))
}

/// Finds the template that generated `text` and its slot words.
pub fn match_template(text: &str) -> Option<(&'static Template, Slots)> {
    template_regexes()
        .iter()
        .find_map(|(t, re)| captures(re, text).map(|s| (template(t.id).unwrap(), s)))
}

/// Recovers the program of a generated question.
pub fn parse_question_nl(text: &str) -> Result<Program, NlError> {
    let (t, slots) = match_template(text).ok_or_else(|| NlError::NoTemplate(text.to_string()))?;
    Ok(instantiate(t, &slots)?.1)
}

/// Recovers the program of a generated choice of a multiple-choice question.
pub fn parse_choice_nl(question: &str, choice: &str) -> Result<Program, NlError> {
    let (t, qslots) =
        match_template(question).ok_or_else(|| NlError::NoTemplate(question.to_string()))?;
    if !t.qtype.is_multiple_choice() {
        return Err(NlError::NotMultipleChoice(question.to_string()));
    }
    let stem = instantiate(t, &qslots)?.1;
    let (kind, slots) = choice_regexes()
        .iter()
        .find_map(|(k, re)| captures(re, choice).map(|s| (*k, s)))
        .ok_or_else(|| NlError::NoChoicePattern(choice.to_string()))?;
    let q = qslots.get("Q").cloned().unwrap_or_default();
    Ok(instantiate_choice(&stem, &q, kind, &slots)?.1)
}

/// Slot names a template's text uses.
pub fn text_slots(pattern: &str) -> Vec<String> {
    slot_regex()
        .captures_iter(pattern)
        .map(|m| m[1].to_string())
        .collect()
}

/// Slot names reachable from a program pattern, including those pulled in by fillers.
pub fn program_slots(pattern: &str) -> Vec<String> {
    let mut out: Vec<String> = text_slots(pattern);
    if out.iter().any(|s| kind(s) == "DA") {
        out.push("TI".into());
    }
    out
}
