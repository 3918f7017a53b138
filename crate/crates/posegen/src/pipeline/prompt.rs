//! Prompt templates.
//!
//! Placeholders are `{action}` (alias `{a}`), `{person}` (`{p}`) and
//! `{descriptor}` (`{d}`). Anything else in braces is an error.

use crate::{Error, Result};

pub const DEFAULT_TEMPLATE: &str = "a photo of an athlete doing {action}";
pub const DEFAULT_PERSON: &str = "a person";
pub const DEFAULT_DESCRIPTOR: &str = "a photo";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptParts<'a> {
    pub action: &'a str,
    pub person: &'a str,
    pub descriptor: &'a str,
}

impl<'a> PromptParts<'a> {
    pub fn new(action: &'a str) -> Self {
        Self {
            action,
            person: DEFAULT_PERSON,
            descriptor: DEFAULT_DESCRIPTOR,
        }
    }
}

pub fn build_prompt(template: &str, parts: &PromptParts<'_>) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Invalid(format!("unclosed `{{` in prompt template `{template}`")))?;
        let value = match &after[..close] {
            "action" | "a" => parts.action,
            "person" | "p" => parts.person,
            "descriptor" | "d" => parts.descriptor,
            other => {
                return Err(Error::Invalid(format!(
                    "unknown placeholder `{{{other}}}` in prompt template `{template}`"
                )))
            }
        };
        out.push_str(value);
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err(Error::Invalid(format!("stray `}}` in prompt template `{template}`")));
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn athlete_template() {
        assert_eq!(
            build_prompt(DEFAULT_TEMPLATE, &PromptParts::new("diving")).unwrap(),
            "a photo of an athlete doing diving"
        );
    }

    #[test]
    fn short_placeholders() {
        let parts = PromptParts {
            action: "water activities",
            person: "a man",
            descriptor: "a nice photo",
        };
        assert_eq!(
            build_prompt("{d} of {p} doing {a}", &parts).unwrap(),
            "a nice photo of a man doing water activities"
        );
    }

    #[test]
    fn bad_templates() {
        let p = PromptParts::new("x");
        assert!(build_prompt("a {unknown}", &p).is_err());
        assert!(build_prompt("a {action", &p).is_err());
        assert!(build_prompt("a action}", &p).is_err());
        assert_eq!(build_prompt("no placeholders", &p).unwrap(), "no placeholders");
    }
}
