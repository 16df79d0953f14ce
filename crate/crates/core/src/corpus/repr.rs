use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CorpusError, FgetId, Inventory, Result, Sentence, Span, TokenId};

/// How entity mentions are presented to the sentence encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReprMode {
    /// Mentions kept as written.
    Raw,
    /// Each mention replaced by a single FGET type token.
    Fget,
    /// Each mention replaced by its FGET type token followed by the mention.
    FgetMention,
}

impl fmt::Display for ReprMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReprMode::Raw => "raw",
            ReprMode::Fget => "fget",
            ReprMode::FgetMention => "fget-mention",
        })
    }
}

impl FromStr for ReprMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "raw" => Ok(ReprMode::Raw),
            "fget" => Ok(ReprMode::Fget),
            "fget-mention" => Ok(ReprMode::FgetMention),
            other => Err(format!(
                "unknown representation `{other}` (expected raw, fget or fget-mention)"
            )),
        }
    }
}

/// Token sequence handed to the encoder, with mention spans recomputed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub tokens: Vec<TokenId>,
    pub mention_i: Span,
    pub mention_j: Span,
}

pub fn fget_token(inventory: &Inventory, fget: FgetId) -> Result<TokenId> {
    if fget >= inventory.num_fget {
        return Err(CorpusError::UnknownFget(fget));
    }
    Ok((inventory.vocab_size + fget) as TokenId)
}

/// Replaces the two mention spans with the given token sequences. Tokens
/// outside the spans keep their order.
pub fn replace_mentions(
    sentence: &Sentence,
    with_i: &[TokenId],
    with_j: &[TokenId],
) -> EncodedSentence {
    let (first, second, i_first) = if sentence.mention_i.start() <= sentence.mention_j.start() {
        (sentence.mention_i, sentence.mention_j, true)
    } else {
        (sentence.mention_j, sentence.mention_i, false)
    };
    let (repl_first, repl_second) = if i_first {
        (with_i, with_j)
    } else {
        (with_j, with_i)
    };
    let t = &sentence.tokens;
    let mut tokens = Vec::with_capacity(t.len() + repl_first.len() + repl_second.len());
    tokens.extend_from_slice(&t[..first.start()]);
    let a = Span(tokens.len(), tokens.len() + repl_first.len());
    tokens.extend_from_slice(repl_first);
    tokens.extend_from_slice(&t[first.end()..second.start()]);
    let b = Span(tokens.len(), tokens.len() + repl_second.len());
    tokens.extend_from_slice(repl_second);
    tokens.extend_from_slice(&t[second.end()..]);
    let (mention_i, mention_j) = if i_first { (a, b) } else { (b, a) };
    EncodedSentence {
        tokens,
        mention_i,
        mention_j,
    }
}

/// Produces the encoder input for `sentence` in a bag whose FGET pair is
/// `fget`.
pub fn apply_repr_mode(
    sentence: &Sentence,
    fget: (FgetId, FgetId),
    mode: ReprMode,
    inventory: &Inventory,
) -> Result<EncodedSentence> {
    let mention = |span: Span| &sentence.tokens[span.start()..span.end()];
    match mode {
        ReprMode::Raw => Ok(EncodedSentence {
            tokens: sentence.tokens.clone(),
            mention_i: sentence.mention_i,
            mention_j: sentence.mention_j,
        }),
        ReprMode::Fget => {
            let ti = fget_token(inventory, fget.0)?;
            let tj = fget_token(inventory, fget.1)?;
            Ok(replace_mentions(sentence, &[ti], &[tj]))
        }
        ReprMode::FgetMention => {
            let mut with_i = vec![fget_token(inventory, fget.0)?];
            with_i.extend_from_slice(mention(sentence.mention_i));
            let mut with_j = vec![fget_token(inventory, fget.1)?];
            with_j.extend_from_slice(mention(sentence.mention_j));
            Ok(replace_mentions(sentence, &with_i, &with_j))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::sentence;
    use proptest::prelude::*;

    const W1: u32 = 1;
    const MA: u32 = 2;
    const W2: u32 = 3;
    const MB: u32 = 4;

    fn inventory() -> Inventory {
        Inventory {
            vocab_size: 10,
            num_fget: 3,
            num_relations: 1,
            num_entities: 2,
        }
    }

    #[test]
    fn raw_is_identity() {
        let s = sentence(&[W1, MA, W2, MB], (1, 2), (3, 4));
        let e = apply_repr_mode(&s, (0, 2), ReprMode::Raw, &inventory()).unwrap();
        assert_eq!(e.tokens, s.tokens);
        assert_eq!((e.mention_i, e.mention_j), (s.mention_i, s.mention_j));
    }

    #[test]
    fn fget_replaces_each_mention_with_its_type() {
        let s = sentence(&[W1, MA, W2, MB], (1, 2), (3, 4));
        let (ta, tb) = (10, 12);
        let e = apply_repr_mode(&s, (0, 2), ReprMode::Fget, &inventory()).unwrap();
        assert_eq!(e.tokens, vec![W1, ta, W2, tb]);
        assert_eq!(e.mention_i, Span(1, 2));
        assert_eq!(e.mention_j, Span(3, 4));
    }

    #[test]
    fn fget_mention_prefixes_type() {
        let s = sentence(&[W1, MA, W2, MB], (1, 2), (3, 4));
        let (ta, tb) = (10, 12);
        let e = apply_repr_mode(&s, (0, 2), ReprMode::FgetMention, &inventory()).unwrap();
        assert_eq!(e.tokens, vec![W1, ta, MA, W2, tb, MB]);
        assert_eq!(e.mention_i, Span(1, 3));
        assert_eq!(e.mention_j, Span(4, 6));
    }

    #[test]
    fn reversed_mention_order() {
        let s = sentence(&[MB, W1, MA, MA], (2, 4), (0, 1));
        let e = apply_repr_mode(&s, (1, 0), ReprMode::Fget, &inventory()).unwrap();
        assert_eq!(e.tokens, vec![10, W1, 11]);
        assert_eq!(e.mention_i, Span(2, 3));
        assert_eq!(e.mention_j, Span(0, 1));
    }

    #[test]
    fn unknown_fget_is_rejected() {
        let s = sentence(&[W1, MA, W2, MB], (1, 2), (3, 4));
        assert!(matches!(
            apply_repr_mode(&s, (0, 3), ReprMode::Fget, &inventory()),
            Err(CorpusError::UnknownFget(3))
        ));
    }

    #[test]
    fn mode_parses_from_cli_names() {
        for m in [ReprMode::Raw, ReprMode::Fget, ReprMode::FgetMention] {
            assert_eq!(m.to_string().parse::<ReprMode>().unwrap(), m);
        }
        assert!("mention".parse::<ReprMode>().is_err());
    }

    fn arb_sentence() -> impl Strategy<Value = Sentence> {
        (4usize..12)
            .prop_flat_map(|len| {
                (
                    proptest::collection::vec(0u32..10, len),
                    0..len - 1,
                    1usize..3,
                    1usize..3,
                    any::<bool>(),
                )
            })
            .prop_filter_map("spans fit", |(tokens, a, la, lb, swap)| {
                let len = tokens.len();
                let first = Span(a, (a + la).min(len));
                let b = first.end();
                if b >= len {
                    return None;
                }
                let second = Span(b + (len - b) / 2, (b + (len - b) / 2 + lb).min(len));
                if second.is_empty() || second.start() < first.end() {
                    return None;
                }
                let (mi, mj) = if swap { (second, first) } else { (first, second) };
                Some(Sentence {
                    tokens,
                    mention_i: mi,
                    mention_j: mj,
                    relevance_label: None,
                    rationale_for: None,
                })
            })
    }

    fn outside(tokens: &[u32], a: Span, b: Span) -> Vec<u32> {
        tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| !a.contains(*i) && !b.contains(*i))
            .map(|(_, &t)| t)
            .collect()
    }

    proptest! {
        #[test]
        fn tokens_outside_mentions_are_untouched(s in arb_sentence()) {
            let base = outside(&s.tokens, s.mention_i, s.mention_j);
            for mode in [ReprMode::Raw, ReprMode::Fget, ReprMode::FgetMention] {
                let e = apply_repr_mode(&s, (1, 2), mode, &inventory()).unwrap();
                prop_assert_eq!(outside(&e.tokens, e.mention_i, e.mention_j), base.clone());
            }
        }
    }
}
