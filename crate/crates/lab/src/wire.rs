//! Little-endian primitives shared by the binary formats.

use std::io::{self, Write};

pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    what: fn(String) -> crate::error::FormatError,
}

impl<'a> Cursor<'a> {
    pub fn new(buf: &'a [u8], what: fn(String) -> crate::error::FormatError) -> Self {
        Cursor { buf, pos: 0, what }
    }

    pub fn take(&mut self, n: usize) -> crate::error::Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err((self.what)(format!("truncated at byte {} (wanted {n} more)", self.pos)));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> crate::error::Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> crate::error::Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> crate::error::Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> crate::error::Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn string(&mut self) -> crate::error::Result<String> {
        let n = self.u16()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| (self.what)("name is not UTF-8".into()))
    }

    pub fn fail(&self, msg: impl Into<String>) -> crate::error::FormatError {
        (self.what)(msg.into())
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub(crate) fn put_string(w: &mut impl Write, s: &str) -> io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "string longer than 65535 bytes"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub(crate) fn put_u32(w: &mut impl Write, v: usize) -> io::Result<()> {
    let v = u32::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "value exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}
