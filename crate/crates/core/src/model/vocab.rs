//! Byte-level vocabulary: ids 0..=255 are raw bytes, followed by three specials.

use crate::error::{Error, Result};

pub type Token = u32;

pub const PAD: Token = 256;
pub const BOS: Token = 257;
pub const EOS: Token = 258;
pub const VOCAB_SIZE: usize = 259;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Vocabulary;

impl Vocabulary {
    pub fn size(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn encode(&self, text: &str) -> Vec<Token> {
        self.encode_bytes(text.as_bytes())
    }

    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<Token> {
        bytes.iter().map(|&b| Token::from(b)).collect()
    }

    /// Bytes for every token id; specials map to nothing.
    pub fn decode_bytes(&self, tokens: &[Token]) -> Vec<u8> {
        tokens
            .iter()
            .filter_map(|&t| u8::try_from(t).ok())
            .collect()
    }

    pub fn decode_lossy(&self, tokens: &[Token]) -> String {
        String::from_utf8_lossy(&self.decode_bytes(tokens)).into_owned()
    }

    pub fn is_special(&self, token: Token) -> bool {
        (PAD..=EOS).contains(&token)
    }

    pub fn check(&self, tokens: &[Token]) -> Result<()> {
        match tokens.iter().find(|&&t| t as usize >= VOCAB_SIZE) {
            Some(t) => Err(Error::Data(format!("token id {t} outside vocabulary"))),
            None => Ok(()),
        }
    }
}
