use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Key, LabelVector};

/// Marker that precedes the post text in every user message.
pub const POST_MARKER: &str = "Post:\n";

/// Appended to the user message when a reply could not be parsed.
pub const FORMAT_REMINDER: &str = "Reminder: begin your reply with a dictionary mapping each of the five keys ('Threats to Culture or Identity', 'Threats to Survival or Physical Security', 'Vilification/Villainization', 'Explicit Dehumanization', 'None') to 0 or 1, then give a one-sentence explanation.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Bare,
    InContext,
    SystemSteering,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [
        PromptMode::Bare,
        PromptMode::InContext,
        PromptMode::SystemSteering,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Bare => "bare",
            PromptMode::InContext => "in_context",
            PromptMode::SystemSteering => "system_steering",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown prompt mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub text: String,
    pub labels: LabelVector,
}

/// Domain-specific prompt material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub name: String,
    /// Base task instruction shared by every mode.
    pub task_instruction: String,
    /// Framing of the target domain, used only for system steering.
    pub domain_framing: String,
    /// Category definitions keyed by category name.
    pub definitions: Vec<(Key, String)>,
    #[serde(default)]
    pub demonstrations: Vec<Demonstration>,
}

impl DomainProfile {
    /// Profile for channels discussing the Russia-Ukraine war.
    pub fn war_bloggers() -> Self {
        DomainProfile {
            name: "war_bloggers".into(),
            task_instruction: "You are an expert annotator of intergroup conflict language. You label posts for four categories of othering language.".into(),
            domain_framing: "The posts come from Telegram channels run by war bloggers covering the Russia-Ukraine war. The ingroup is the blogger's own national community and the outgroup is the opposing side, its government, army or supporters.".into(),
            definitions: default_definitions(),
            demonstrations: Vec::new(),
        }
    }

    /// Profile for English-language posts from a general social platform.
    pub fn social_platform() -> Self {
        DomainProfile {
            name: "social_platform".into(),
            task_instruction: "You are an expert annotator of intergroup conflict language. You label posts for four categories of othering language.".into(),
            domain_framing: "The posts come from an English-language social network with many political users. Outgroups may be defined by religion, ethnicity, nationality, immigration status or political affiliation rather than by a war front.".into(),
            definitions: default_definitions(),
            demonstrations: Vec::new(),
        }
    }

    pub fn with_demonstrations(mut self, demos: Vec<Demonstration>) -> Self {
        self.demonstrations = demos;
        self
    }
}

fn default_definitions() -> Vec<(Key, String)> {
    vec![
        (
            Key::CultureIdentity,
            "the outgroup is framed as a danger to the ingroup's culture, values, language or traditions".into(),
        ),
        (
            Key::SurvivalSecurity,
            "the outgroup is portrayed as an existential or physical menace to the ingroup".into(),
        ),
        (
            Key::Vilification,
            "the outgroup is cast as inherently evil, criminal or immoral".into(),
        ),
        (
            Key::Dehumanization,
            "the outgroup is compared to animals, objects, monsters or spirits".into(),
        ),
    ]
}

/// The messages sent for one post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub mode: PromptMode,
    pub system_text: String,
    pub user_text: String,
}

fn user_instruction() -> String {
    let keys = Key::ALL
        .iter()
        .map(|k| format!("'{}'", k.name()))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "Classify the post below. Reply with a dictionary mapping each of the keys {keys} to 0 or 1, followed by a one-sentence explanation. 'None' is 1 only when no other key is 1."
    )
}

/// Builds the system and user messages for a post.
pub fn build_prompt(
    post_text: &str,
    mode: PromptMode,
    profile: &DomainProfile,
) -> Result<PromptBundle> {
    let instruction = user_instruction();
    let (system_text, user_text) = match mode {
        PromptMode::Bare => (
            profile.task_instruction.clone(),
            format!("{instruction}\n\n{POST_MARKER}{post_text}"),
        ),
        PromptMode::InContext => {
            if profile.demonstrations.is_empty() {
                return Err(Error::invalid(
                    "in_context prompting requires at least one demonstration",
                ));
            }
            let demos = profile
                .demonstrations
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    format!(
                        "Example {}:\n{}\nAnswer: {}",
                        i + 1,
                        d.text,
                        d.labels.to_reply_mapping()
                    )
                })
                .collect::<Vec<_>>()
                .join("\n\n");
            (
                profile.task_instruction.clone(),
                format!("{instruction}\n\n{demos}\n\n{POST_MARKER}{post_text}"),
            )
        }
        PromptMode::SystemSteering => {
            if profile.domain_framing.trim().is_empty() {
                return Err(Error::invalid("system steering requires a domain framing"));
            }
            let definitions = profile
                .definitions
                .iter()
                .map(|(k, d)| format!("- {}: {}", k.name(), d))
                .collect::<Vec<_>>()
                .join("\n");
            (
                format!(
                    "{}\n\n{}\n\nCategory definitions:\n{}",
                    profile.task_instruction, profile.domain_framing, definitions
                ),
                format!("{instruction}\n\n{POST_MARKER}{post_text}"),
            )
        }
    };
    Ok(PromptBundle {
        mode,
        system_text,
        user_text,
    })
}

/// Recovers the post text from a user message built by [`build_prompt`].
pub fn post_text_of(user_text: &str) -> Option<&str> {
    user_text
        .rfind(POST_MARKER)
        .map(|i| &user_text[i + POST_MARKER.len()..])
        .map(|s| {
            s.strip_suffix(&format!("\n\n{FORMAT_REMINDER}"))
                .unwrap_or(s)
        })
}
