use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const SOS: TokenId = 1;
pub const EOS: TokenId = 2;

const SPECIALS: [&str; 3] = ["<pad>", "<sos>", "<eos>"];

/// Dense token table: `PAD`, `SOS`, `EOS`, one language token per script,
/// then content characters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabListing", into = "VocabListing")]
pub struct Vocab {
    tokens: Vec<String>,
    n_langs: usize,
    index: HashMap<String, TokenId>,
}

/// On-disk form of a [`Vocab`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabListing {
    pub languages: Vec<String>,
    pub content: Vec<String>,
}

impl TryFrom<VocabListing> for Vocab {
    type Error = Error;

    fn try_from(l: VocabListing) -> Result<Self> {
        Vocab::new(&l.languages, &l.content)
    }
}

impl From<Vocab> for VocabListing {
    fn from(v: Vocab) -> Self {
        VocabListing {
            languages: v.language_names().map(str::to_owned).collect(),
            content: v.tokens[3 + v.n_langs..].to_vec(),
        }
    }
}

impl Vocab {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(languages: &[S], content: &[T]) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(languages.iter().map(|l| format!("<{}>", l.as_ref())));
        tokens.extend(content.iter().map(|c| c.as_ref().to_owned()));
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Vocab("empty token".into()));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Vocab(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            n_langs: languages.len(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn language_names(&self) -> impl Iterator<Item = &str> {
        self.tokens[3..3 + self.n_langs].iter().map(|t| &t[1..t.len() - 1])
    }

    /// Token id of the language tag `name`.
    pub fn lang(&self, name: &str) -> Result<TokenId> {
        self.id(&format!("<{name}>"))
            .ok_or_else(|| Error::Vocab(format!("unknown language `{name}`")))
    }

    pub fn lang_name(&self, id: TokenId) -> Result<&str> {
        if !self.is_lang(id) {
            return Err(Error::Vocab(format!("token {id} is not a language token")));
        }
        let t = &self.tokens[id as usize];
        Ok(&t[1..t.len() - 1])
    }

    pub fn is_lang(&self, id: TokenId) -> bool {
        (3..3 + self.n_langs as TokenId).contains(&id)
    }

    pub fn is_content(&self, id: TokenId) -> bool {
        id as usize >= 3 + self.n_langs && (id as usize) < self.tokens.len()
    }

    pub fn first_content(&self) -> TokenId {
        (3 + self.n_langs) as TokenId
    }

    /// Splits a word into single-character content tokens tagged `lang`.
    pub fn encode_word(&self, word: &str, lang: TokenId) -> Result<TokenSequence> {
        let mut ids = Vec::with_capacity(word.len());
        let mut buf = [0u8; 4];
        for ch in word.chars() {
            let id = self
                .id(ch.encode_utf8(&mut buf))
                .filter(|&id| self.is_content(id))
                .ok_or_else(|| Error::Vocab(format!("character {ch:?} not in vocabulary")))?;
            ids.push(id);
        }
        TokenSequence::new(ids, lang, self)
    }

    pub fn decode_word(&self, seq: &TokenSequence) -> String {
        seq.ids.iter().filter_map(|&id| self.token(id)).collect()
    }
}

/// Content tokens of one word plus its language tag.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    pub lang: TokenId,
}

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>, lang: TokenId, vocab: &Vocab) -> Result<Self> {
        if !vocab.is_lang(lang) {
            return Err(Error::Vocab(format!("token {lang} is not a language token")));
        }
        if let Some(&bad) = ids.iter().find(|&&id| !vocab.is_content(id)) {
            return Err(Error::Vocab(format!("token {bad} is not a content token")));
        }
        Ok(Self { ids, lang })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}@{}", self.ids, self.lang)
    }
}
