//! Turning generated answer strings back into character spans.
//!
//! An answer is split on `;` into candidates, and each candidate is located in
//! the sentence by exact, case-sensitive matching. A cursor keeps the spans in
//! the order the candidates were generated: after a match at `s` the next
//! search begins at `s + 1`, so a candidate repeated in the answer lands on
//! the next occurrence. Candidates with no occurrence at or after the cursor
//! are discarded and leave the cursor where it was.

use serde::{Deserialize, Serialize};

use crate::corpus::ArgumentSpan;

pub const DEFAULT_EOS_TOKEN: &str = "</s>";

/// A matched candidate, in character offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedArguments {
    /// Strictly increasing start offsets.
    pub spans: Vec<MatchedSpan>,
    pub discarded: Vec<String>,
}

impl DecodedArguments {
    pub fn into_arguments(self, role: &str) -> Vec<ArgumentSpan> {
        self.spans
            .into_iter()
            .map(|s| ArgumentSpan {
                start: s.start,
                end: s.end,
                role: role.to_string(),
                surface: s.surface,
            })
            .collect()
    }
}

/// Strips one trailing `eos_token`, splits on `;`, trims, and drops empty pieces.
pub fn parse_answer(raw: &str, eos_token: &str) -> Vec<String> {
    let trimmed = raw.trim_end();
    let body = if eos_token.is_empty() {
        trimmed
    } else {
        trimmed.strip_suffix(eos_token).unwrap_or(trimmed)
    };
    body.split(';')
        .map(str::trim)
        .filter(|piece| !piece.is_empty())
        .map(str::to_string)
        .collect()
}

/// Locates candidates in `text` with an advancing cursor.
pub fn align_spans<S: AsRef<str>>(candidates: &[S], text: &str) -> DecodedArguments {
    // byte offset of every char, plus the end
    let boundaries: Vec<usize> = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect();
    let char_at = |byte: usize| boundaries.partition_point(|&b| b < byte);

    let mut decoded = DecodedArguments::default();
    let mut cursor = 0usize; // in chars
    for candidate in candidates {
        let candidate = candidate.as_ref();
        let from = boundaries.get(cursor).copied();
        let found = match from {
            Some(from) if !candidate.is_empty() => text[from..].find(candidate).map(|b| from + b),
            _ => None,
        };
        match found {
            Some(byte_start) => {
                let start = char_at(byte_start);
                let end = char_at(byte_start + candidate.len());
                decoded.spans.push(MatchedSpan {
                    start,
                    end,
                    surface: candidate.to_string(),
                });
                cursor = start + 1;
            }
            None => decoded.discarded.push(candidate.to_string()),
        }
    }
    decoded
}

/// [`parse_answer`] followed by [`align_spans`].
pub fn decode_answer(raw: &str, eos_token: &str, text: &str) -> DecodedArguments {
    align_spans(&parse_answer(raw, eos_token), text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const C3: &str = "Injured Russian diplomats and a convoy of America's Kurdish comrades in arms were among unintended victims caught in crossfire and friendly fire Sunday.";

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_answer("diplomats; convoy; victims </s>", "</s>"),
            ["diplomats", "convoy", "victims"]
        );
        assert!(parse_answer("</s>", "</s>").is_empty());
        assert!(parse_answer("", "</s>").is_empty());
        assert_eq!(parse_answer(" coalition ", "</s>"), ["coalition"]);
        assert_eq!(parse_answer("a;;b; ;", "</s>"), ["a", "b"]);
        // only one trailing eos is removed
        assert_eq!(parse_answer("x </s></s>", "</s>"), ["x </s>"]);
        assert_eq!(parse_answer("x", ""), ["x"]);
    }

    #[test]
    fn align_injury_sentence() {
        // offsets from a brute-force scan of the sentence
        let decoded = align_spans(&["diplomats", "convoy", "victims"], C3);
        let got: Vec<(usize, usize, &str)> = decoded
            .spans
            .iter()
            .map(|s| (s.start, s.end, s.surface.as_str()))
            .collect();
        assert_eq!(got, [(16, 25, "diplomats"), (32, 38, "convoy"), (99, 106, "victims")]);
        assert!(decoded.discarded.is_empty());
    }

    #[test]
    fn repeated_candidate_moves_to_next_occurrence() {
        let text = "Welch told reporters that Welch would stay.";
        let decoded = align_spans(&["Welch", "Welch"], text);
        let starts: Vec<usize> = decoded.spans.iter().map(|s| s.start).collect();
        assert_eq!(starts, [0, 26]);
    }

    #[test]
    fn unmatched_candidate_is_discarded_without_moving_cursor() {
        let decoded = align_spans(&["nosuchstring"], C3);
        assert!(decoded.spans.is_empty());
        assert_eq!(decoded.discarded, ["nosuchstring"]);

        let decoded = align_spans(&["convoy", "nosuchstring", "victims"], C3);
        assert_eq!(decoded.spans.len(), 2);
        assert_eq!(decoded.discarded, ["nosuchstring"]);
    }

    #[test]
    fn out_of_order_candidate_is_discarded() {
        // "diplomats" occurs only before "victims"
        let decoded = align_spans(&["victims", "diplomats"], C3);
        assert_eq!(decoded.spans.len(), 1);
        assert_eq!(decoded.discarded, ["diplomats"]);
    }

    #[test]
    fn overlapping_candidates_keep_increasing_starts() {
        let text = "the New York Times reported";
        let decoded = align_spans(&["New York Times", "New York"], text);
        // "New York" at 4 is before the cursor (5), and there is no later one
        assert_eq!(decoded.spans.len(), 1);
        let decoded = align_spans(&["New York", "York Times"], text);
        let starts: Vec<usize> = decoded.spans.iter().map(|s| s.start).collect();
        assert_eq!(starts, [4, 8]);
    }

    #[test]
    fn unicode_offsets() {
        let decoded = align_spans(&["Zoë", "Málaga"], "José attacked Zoë in Málaga.");
        let got: Vec<(usize, usize)> = decoded.spans.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(got, [(14, 17), (21, 27)]);
    }

    #[test]
    fn empty_candidate_is_discarded() {
        let decoded = align_spans(&[""], "abc");
        assert_eq!(decoded.discarded, [""]);
    }

    #[test]
    fn arguments_carry_role() {
        let args = decode_answer("diplomats </s>", "</s>", C3).into_arguments("Victim");
        assert_eq!(args[0].role, "Victim");
        assert_eq!((args[0].start, args[0].end), (16, 25));
    }
}
