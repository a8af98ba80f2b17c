//! Word-level vocabulary with fixed special and marker tokens.
//!
//! Text is normalized by lowercasing, splitting every character that is
//! neither alphanumeric nor whitespace into its own token, and splitting on
//! whitespace. All reserved tokens contain punctuation and are longer than one
//! character, so normalized natural text can never collide with them.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const GEN_RESP: u32 = 4;
pub const GEN_INST: u32 = 5;
pub const MASK_0: u32 = 6;
pub const CTX: u32 = 7;
pub const RSP: u32 = 8;
pub const INS: u32 = 9;
pub const PER: u32 = 10;
pub const SEP: u32 = 11;
pub const SPK_A: u32 = 12;
pub const SPK_B: u32 = 13;

/// Number of reserved ids at the start of every vocabulary.
pub const NUM_RESERVED: usize = 14;

/// Literal spellings of the reserved tokens, indexed by id.
pub const RESERVED: [&str; NUM_RESERVED] = [
    "<pad>",
    "<unk>",
    "<s>",
    "</s>",
    "<gen_resp>",
    "<gen_inst>",
    "<mask_0>",
    "[CTX]",
    "[RSP]",
    "[INS]",
    "[PER]",
    "[SEP]",
    "[SPKA]",
    "[SPKB]",
];

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocabulary size limit {0} is below the {NUM_RESERVED} reserved tokens")]
    SizeTooSmall(usize),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },
    #[error("vocabulary file: {0}")]
    BadVocab(String),
    #[error("reading vocabulary {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercase, split punctuation into standalone tokens, split on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
        } else if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(ch.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Bijective token <-> id mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Vocabulary holding only the reserved tokens.
    pub fn reserved_only() -> Self {
        Self::from_tokens(RESERVED.iter().map(|s| s.to_string()).collect())
            .expect("reserved tokens form a valid vocabulary")
    }

    /// Build from an id-ordered token list, checking the reserved prefix and
    /// bijectivity.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        if tokens.len() < NUM_RESERVED {
            return Err(TokenizerError::BadVocab(format!("{} tokens, need at least {NUM_RESERVED}", tokens.len())));
        }
        for (id, (got, want)) in tokens.iter().zip(RESERVED.iter()).enumerate() {
            if got != want {
                return Err(TokenizerError::BadVocab(format!("id {id} must be {want:?}, found {got:?}")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(TokenizerError::BadVocab(format!("invalid token at id {id}: {tok:?}")));
            }
            if index.insert(tok.clone(), id as u32).is_some() {
                return Err(TokenizerError::BadVocab(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Normalize `text` and map each token to its id, UNK when unknown.
    /// No BOS/EOS framing is added.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        normalize(text).iter().map(|t| self.id(t).unwrap_or(UNK)).collect()
    }

    /// Like [`encode`](Self::encode), but whitespace-separated pieces that are
    /// exactly a marker literal (`[CTX]`, `<gen_resp>`, ...) map to the marker
    /// id. Used for text that was itself rendered with markers, such as a
    /// serialized dialogue context.
    pub fn encode_marked(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for piece in text.split_whitespace() {
            match RESERVED[GEN_RESP as usize..].iter().position(|m| *m == piece) {
                Some(off) => ids.push(GEN_RESP + off as u32),
                None => ids.extend(self.encode(piece)),
            }
        }
        ids
    }

    /// Drop reserved tokens and join the rest with single spaces.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut words: Vec<&str> = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id).ok_or(TokenizerError::IdOutOfRange { id, size: self.len() })?;
            if (id as usize) >= NUM_RESERVED {
                words.push(tok);
            }
        }
        Ok(words.join(" "))
    }

    /// One token per line; line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        fs::write(path, self.to_text())
            .map_err(|source| TokenizerError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path)
            .map_err(|source| TokenizerError::Io { path: path.display().to_string(), source })?;
        Self::from_text(&text)
    }
}

/// Count normalized tokens over `texts` and admit those seen at least
/// `min_freq` times, most frequent first (ties lexicographic), until the
/// vocabulary reaches `max_size` entries including the reserved ones.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], min_freq: usize, max_size: usize) -> Result<Vocabulary, TokenizerError> {
    if max_size < NUM_RESERVED {
        return Err(TokenizerError::SizeTooSmall(max_size));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for tok in normalize(text.as_ref()) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq.max(1)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(ranked.into_iter().take(max_size - NUM_RESERVED).map(|(t, _)| t));
    Vocabulary::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_rule() {
        assert_eq!(normalize("A a a."), vec!["a", "a", "a", "."]);
        assert_eq!(normalize("Hello, you"), vec!["hello", ",", "you"]);
        assert_eq!(normalize("  "), Vec::<String>::new());
        assert_eq!(normalize("[CTX]"), vec!["[", "ctx", "]"]);
        assert_eq!(normalize("<gen_resp>"), vec!["<", "gen", "_", "resp", ">"]);
    }

    #[test]
    fn reserved_ids_fixed() {
        let v = Vocabulary::reserved_only();
        assert_eq!(v.len(), 14);
        assert_eq!(v.id("<pad>"), Some(PAD));
        assert_eq!(v.id("<gen_resp>"), Some(GEN_RESP));
        assert_eq!(v.id("<gen_inst>"), Some(GEN_INST));
        assert_eq!(v.id("<mask_0>"), Some(MASK_0));
        assert_eq!(v.id("[SPKB]"), Some(SPK_B));
    }

    #[test]
    fn build_small_vocab() {
        let v = build_vocab(&["A a a."], 1, 100).unwrap();
        assert_eq!(v.len(), 16);
        assert_eq!(v.id("a"), Some(14));
        assert_eq!(v.id("."), Some(15));

        let v = build_vocab::<&str>(&[], 1, 100).unwrap();
        assert_eq!(v.len(), 14);

        let v = build_vocab(&["b b", "c"], 2, 100).unwrap();
        assert!(v.id("b").is_some());
        assert!(v.id("c").is_none());
    }

    #[test]
    fn ties_are_lexicographic_and_size_capped() {
        let v = build_vocab(&["z y x x"], 1, 16).unwrap();
        assert_eq!(v.tokens()[14..], ["x".to_string(), "y".to_string()]);
        assert!(matches!(build_vocab(&["a"], 1, 13), Err(TokenizerError::SizeTooSmall(13))));
    }

    #[test]
    fn encode_decode_examples() {
        let v = build_vocab(&["A a a."], 1, 100).unwrap();
        assert_eq!(v.encode("a ."), vec![14, 15]);
        assert_eq!(v.encode("zzz"), vec![UNK]);
        assert!(v.encode("").is_empty());
        assert_eq!(v.decode(&[BOS, 14, 15, EOS]).unwrap(), "a .");
        assert_eq!(v.decode(&[PAD, PAD]).unwrap(), "");
        assert!(matches!(v.decode(&[99]), Err(TokenizerError::IdOutOfRange { id: 99, .. })));
    }

    #[test]
    fn marked_encoding_recognizes_markers_only_as_whole_pieces() {
        let v = build_vocab(&["hi yo"], 1, 100).unwrap();
        assert_eq!(
            v.encode_marked("[CTX] [SPKA] hi [SPKB] yo"),
            vec![CTX, SPK_A, v.id("hi").unwrap(), SPK_B, v.id("yo").unwrap()]
        );
        assert_eq!(v.encode_marked("<pad>"), v.encode("<pad>"));
        assert!(!v.encode("[CTX]hi").contains(&CTX));
    }

    #[test]
    fn vocab_text_round_trip() {
        let v = build_vocab(&["the cat sat on the mat ."], 1, 100).unwrap();
        let w = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(v, w);
        assert!(Vocabulary::from_text("a\nb\n").is_err());
        let mut bad = v.to_text();
        bad.push_str("cat\n");
        assert!(Vocabulary::from_text(&bad).is_err());
    }

    proptest! {
        #[test]
        fn normalized_text_never_yields_reserved(s in "\\PC{0,40}") {
            for tok in normalize(&s) {
                prop_assert!(!RESERVED.contains(&tok.as_str()));
            }
        }

        #[test]
        fn round_trips(words in proptest::collection::vec("[a-z]{1,6}|[.,!?]", 0..20)) {
            let text = words.join(" ");
            let v = build_vocab(&[text.as_str()], 1, 1000).unwrap();
            let ids = v.encode(&text);
            prop_assert_eq!(v.decode(&ids).unwrap(), text);
            prop_assert_eq!(v.encode(&v.decode(&ids).unwrap()), ids);
        }

        #[test]
        fn build_is_deterministic(texts in proptest::collection::vec("[a-c ]{0,12}", 0..8)) {
            let a = build_vocab(&texts, 1, 20).unwrap();
            let b = build_vocab(&texts, 1, 20).unwrap();
            prop_assert_eq!(&a.tokens()[..14], &b.tokens()[..14]);
            prop_assert_eq!(a, b);
        }
    }
}
