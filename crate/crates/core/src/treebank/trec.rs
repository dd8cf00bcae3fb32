use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coarse TREC question types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionType {
    Enty,
    Hum,
    Loc,
    Desc,
    Num,
    Abbr,
}

impl QuestionType {
    pub const ALL: [QuestionType; 6] = [
        QuestionType::Enty,
        QuestionType::Hum,
        QuestionType::Loc,
        QuestionType::Desc,
        QuestionType::Num,
        QuestionType::Abbr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Enty => "ENTY",
            QuestionType::Hum => "HUM",
            QuestionType::Loc => "LOC",
            QuestionType::Desc => "DESC",
            QuestionType::Num => "NUM",
            QuestionType::Abbr => "ABBR",
        }
    }

    pub fn class_id(self) -> usize {
        Self::ALL.iter().position(|q| *q == self).expect("listed")
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown question type {s:?}")))
    }
}

/// Splits `"COARSE:fine rest"` into the coarse type and the remainder.
pub(crate) fn split_label(line: &str) -> Result<(QuestionType, &str)> {
    let line = line.trim();
    let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let (coarse, _fine) = head
        .split_once(':')
        .ok_or_else(|| Error::Invalid(format!("missing ':' in label field {head:?}")))?;
    Ok((coarse.parse()?, rest.trim()))
}

/// Parses a TREC line `"NUM:date What year did the Titanic sink ?"`.
pub fn parse_trec_line(line: &str) -> Result<(QuestionType, Vec<String>)> {
    let (label, rest) = split_label(line)?;
    let tokens: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(Error::Invalid("question has no tokens".into()));
    }
    Ok((label, tokens))
}
