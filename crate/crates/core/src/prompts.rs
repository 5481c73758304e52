//! Prompt templates with `{name}` placeholders. Defaults are built in; any
//! template can be replaced from a text file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
    #[error("template `{name}` lacks placeholder {{{placeholder}}}")]
    MissingPlaceholder { name: String, placeholder: String },
}

const KEYWORDS: &str = "\
Pick out the phrases of the question that a search would need. Copy each phrase \
word for word from the question, keep them in question order, do not let them \
overlap, and separate them with a bar.
Question: {user_question}
Keywords:";

const ALIGN: &str = "\
For each keyword, write the phrases from the collection that carry the same \
meaning, inside parentheses and separated by commas.";

const VERIFY: &str = "\
Candidate objects and the links found between them:
{draft}
List the objects that are needed to answer the question, separated by commas, \
and close the list with the stop mark.
Selected:";

const DECOMPOSE: &str = "\
Break the question into simpler questions that can each be looked up on their \
own. Write one per line.
Question: {user_question}
Sub-questions:";

const REACT: &str = "\
Work toward the answer step by step. Each step gives a thought followed by an \
action. The action is either Search[words] to look up tables and passages, or \
Finish[answer] once enough is known.
Question: {user_question}
{history}";

/// The set of templates the pipeline and baselines use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompts {
    pub keywords: String,
    pub align: String,
    pub verify: String,
    pub decompose: String,
    pub react: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            keywords: KEYWORDS.into(),
            align: ALIGN.into(),
            verify: VERIFY.into(),
            decompose: DECOMPOSE.into(),
            react: REACT.into(),
        }
    }
}

const REQUIRED: [(&str, &[&str]); 5] = [
    ("keywords", &["user_question"]),
    ("align", &[]),
    ("verify", &["draft"]),
    ("decompose", &["user_question"]),
    ("react", &["user_question", "history"]),
];

impl Prompts {
    /// Defaults with the templates named in `paths` read from files.
    pub fn load(paths: &BTreeMap<String, String>, base: &Path) -> Result<Self, PromptError> {
        let mut p = Self::default();
        for (name, path) in paths {
            let full = base.join(path);
            let text = fs::read_to_string(&full).map_err(|e| PromptError::Io {
                path: full.display().to_string(),
                message: e.to_string(),
            })?;
            let slot = match name.as_str() {
                "keywords" => &mut p.keywords,
                "align" => &mut p.align,
                "verify" => &mut p.verify,
                "decompose" => &mut p.decompose,
                "react" => &mut p.react,
                other => {
                    return Err(PromptError::Io {
                        path: full.display().to_string(),
                        message: format!("unknown template name `{other}`"),
                    })
                }
            };
            *slot = text;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for (name, needed) in REQUIRED {
            let template = match name {
                "keywords" => &self.keywords,
                "align" => &self.align,
                "verify" => &self.verify,
                "decompose" => &self.decompose,
                _ => &self.react,
            };
            for ph in needed {
                if !template.contains(&format!("{{{ph}}}")) {
                    return Err(PromptError::MissingPlaceholder {
                        name: name.into(),
                        placeholder: ph.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Substitute `{name}` placeholders. Unknown placeholders are left as is.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Prompts::default().validate().unwrap();
    }

    #[test]
    fn substitution() {
        assert_eq!(render("Q: {user_question} {x}", &[("user_question", "why")]), "Q: why {x}");
    }

    #[test]
    fn file_override_checks_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("k.txt"), "no placeholder").unwrap();
        let paths = BTreeMap::from([("keywords".to_string(), "k.txt".to_string())]);
        assert!(matches!(
            Prompts::load(&paths, dir.path()),
            Err(PromptError::MissingPlaceholder { .. })
        ));
        std::fs::write(dir.path().join("k.txt"), "Find: {user_question}").unwrap();
        assert_eq!(Prompts::load(&paths, dir.path()).unwrap().keywords, "Find: {user_question}");
    }
}
