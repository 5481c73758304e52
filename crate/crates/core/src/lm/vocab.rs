use std::collections::HashMap;

pub type TokenId = u32;

/// Reserved tokens. They live outside the string namespace, so no content
/// or literal token can collide with them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Special {
    End = 0,
    Newline = 1,
    Open = 2,
    Close = 3,
    ListSep = 4,
    KeywordSep = 5,
    Stop = 6,
}

impl Special {
    pub const ALL: [Special; 7] = [
        Special::End,
        Special::Newline,
        Special::Open,
        Special::Close,
        Special::ListSep,
        Special::KeywordSep,
        Special::Stop,
    ];

    pub fn id(self) -> TokenId {
        self as TokenId
    }

    pub fn display(self) -> &'static str {
        match self {
            Special::End => "</s>",
            Special::Newline => "\n",
            Special::Open => "(",
            Special::Close => ")",
            Special::ListSep => ",",
            Special::KeywordSep => "|",
            Special::Stop => "<>",
        }
    }

    pub fn from_id(id: TokenId) -> Option<Special> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn from_display(s: &str) -> Option<Special> {
        Self::ALL.into_iter().find(|sp| sp.display() == s)
    }
}

/// Open vocabulary of interned token strings plus the reserved specials.
#[derive(Debug, Clone)]
pub struct Vocab {
    strings: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self {
            strings: Special::ALL.iter().map(|s| s.display().to_string()).collect(),
            ids: HashMap::new(),
        }
    }
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.strings.len() as TokenId;
        self.strings.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    /// Id of a non-special token string.
    pub fn lookup(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    /// Id for a display string, specials included.
    pub fn resolve(&self, display: &str) -> Option<TokenId> {
        Special::from_display(display)
            .map(Special::id)
            .or_else(|| self.lookup(display))
    }

    pub fn display(&self, id: TokenId) -> &str {
        &self.strings[id as usize]
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < Special::ALL.len()
    }

    /// Normalized content tokens of `text`.
    pub fn encode_text(&mut self, text: &str) -> Vec<TokenId> {
        crate::text::tokenize(text)
            .iter()
            .map(|t| self.intern(t))
            .collect()
    }

    /// Like `encode_text`, with each line break kept as a newline token.
    pub fn encode_lines(&mut self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for (i, line) in text.split('\n').enumerate() {
            if i > 0 {
                out.push(Special::Newline.id());
            }
            out.extend(self.encode_text(line));
        }
        out
    }

    /// Whitespace-split tokens of `s` kept verbatim, for object names.
    pub fn encode_literal(&mut self, s: &str) -> Vec<TokenId> {
        s.split_whitespace().map(|t| self.intern(t)).collect()
    }

    /// Render tokens as text: space separated, list separators attached to
    /// the preceding token, newlines without padding.
    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            let s = self.display(id);
            let glue = id == Special::ListSep.id()
                || id == Special::Newline.id()
                || out.is_empty()
                || out.ends_with('\n');
            if !glue {
                out.push(' ');
            }
            out.push_str(s);
        }
        out
    }
}
