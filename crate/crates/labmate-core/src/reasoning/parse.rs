//! Structured-response parser.
//!
//! Exactly one grammar is accepted, case-insensitively and with flexible
//! whitespace:
//!
//! ```text
//! Obstruction: <Yes|No>; Interaction: <Yes|No>; Message: <free text to end>
//! ```
//!
//! Anything else is a `ParseError` carrying the byte offset where matching
//! stopped. Evaluation scores non-conforming output as incorrect rather
//! than repairing it, so the strictness is intentional; a lenient
//! fallback that scans for bare yes/no tokens exists behind an opt-in.

use super::{ParseError, VlmResponse};

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Cursor<'a> {
        Cursor { text, pos: 0 }
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
    }

    fn expect_tag(&mut self, tag: &str) -> Result<(), ParseError> {
        let rest = &self.text[self.pos..];
        if rest.len() >= tag.len() && rest.is_char_boundary(tag.len()) {
            let head = &rest[..tag.len()];
            if head.eq_ignore_ascii_case(tag) {
                self.pos += tag.len();
                return Ok(());
            }
        }
        Err(ParseError { offset: self.pos, reason: format!("expected `{tag}`") })
    }

    fn expect_yes_no(&mut self, field: &str) -> Result<bool, ParseError> {
        let rest = &self.text[self.pos..];
        for (word, value) in [("yes", true), ("no", false)] {
            if rest.len() >= word.len()
                && rest.is_char_boundary(word.len())
                && rest[..word.len()].eq_ignore_ascii_case(word)
            {
                self.pos += word.len();
                return Ok(value);
            }
        }
        Err(ParseError {
            offset: self.pos,
            reason: format!("expected `Yes` or `No` for {field}"),
        })
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }
}

/// Parse the structured grammar. Total over arbitrary strings: returns a
/// value or an error, never panics.
pub fn parse_response(raw: &str) -> Result<VlmResponse, ParseError> {
    let mut cur = Cursor::new(raw);

    cur.skip_ws();
    cur.expect_tag("obstruction")?;
    cur.skip_ws();
    cur.expect_tag(":")?;
    cur.skip_ws();
    let obstruction = cur.expect_yes_no("obstruction")?;
    cur.skip_ws();
    cur.expect_tag(";")?;

    cur.skip_ws();
    cur.expect_tag("interaction")?;
    cur.skip_ws();
    cur.expect_tag(":")?;
    cur.skip_ws();
    let interaction = cur.expect_yes_no("interaction")?;
    cur.skip_ws();
    cur.expect_tag(";")?;

    cur.skip_ws();
    cur.expect_tag("message")?;
    cur.skip_ws();
    cur.expect_tag(":")?;
    let message = cur.rest().trim().to_string();

    Ok(VlmResponse { obstruction, interaction, message, raw: raw.to_string() })
}

/// Opt-in fallback: take the first two standalone yes/no tokens as the
/// obstruction and interaction answers. The message is left empty because
/// free text cannot be attributed reliably.
pub fn parse_response_lenient(raw: &str) -> Result<VlmResponse, ParseError> {
    if let Ok(parsed) = parse_response(raw) {
        return Ok(parsed);
    }
    let lower = raw.to_lowercase();
    let mut answers = Vec::with_capacity(2);
    for token in lower.split(|c: char| !c.is_alphanumeric()) {
        match token {
            "yes" => answers.push(true),
            "no" => answers.push(false),
            _ => {}
        }
        if answers.len() == 2 {
            break;
        }
    }
    if answers.len() == 2 {
        Ok(VlmResponse {
            obstruction: answers[0],
            interaction: answers[1],
            message: String::new(),
            raw: raw.to_string(),
        })
    } else {
        Err(ParseError {
            offset: 0,
            reason: format!("found {} standalone yes/no token(s), need 2", answers.len()),
        })
    }
}
