//! Little-endian primitives shared by the bundle and model formats.

use std::io::Cursor;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use egnn_core::data::Masks;
use egnn_core::{Dense, EdgeTensor, SparseMatrix};

use crate::error::{Error, Result};

pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.write_u64::<LE>(v).expect("vec write");
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.write_f64::<LE>(v).expect("vec write");
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        for &x in v {
            self.f64(x);
        }
    }

    pub fn usizes(&mut self, v: &[usize]) {
        self.usize(v.len());
        for &x in v {
            self.usize(x);
        }
    }

    pub fn bools(&mut self, v: &[bool]) {
        self.usize(v.len());
        for &b in v {
            self.u8(b as u8);
        }
    }

    pub fn dense(&mut self, d: &Dense) {
        self.usize(d.rows());
        self.usize(d.cols());
        for &x in d.as_slice() {
            self.f64(x);
        }
    }

    pub fn sparse(&mut self, m: &SparseMatrix) {
        self.usize(m.n());
        self.usizes(m.row_offsets());
        self.usizes(m.col_indices());
        self.f64s(m.values());
    }

    pub fn tensor(&mut self, e: &EdgeTensor) {
        self.usize(e.channel_count());
        for c in e.channels() {
            self.sparse(c);
        }
    }

    pub fn masks(&mut self, m: &Masks) {
        self.bools(&m.train);
        self.bools(&m.val);
        self.bools(&m.test);
    }
}

pub(crate) struct Reader<'a> {
    what: &'static str,
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    pub fn new(what: &'static str, data: &'a [u8]) -> Self {
        Reader {
            what,
            cur: Cursor::new(data),
        }
    }

    fn truncated(&self) -> Error {
        Error::format(self.what, format!("truncated at byte {}", self.cur.position()))
    }

    pub fn corrupt(&self, message: impl Into<String>) -> Error {
        Error::format(self.what, message)
    }

    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.corrupt(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.truncated());
        }
        let start = self.cur.position() as usize;
        self.cur.set_position((start + n) as u64);
        Ok(&self.cur.get_ref()[start..start + n])
    }

    pub fn u8(&mut self) -> Result<u8> {
        self.cur.read_u8().map_err(|_| self.truncated())
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.cur.read_u64::<LE>().map_err(|_| self.truncated())
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.cur.read_f64::<LE>().map_err(|_| self.truncated())
    }

    /// A length or index, bounded by the bytes left so corrupt input cannot
    /// trigger huge allocations.
    pub fn len(&mut self, item_bytes: usize) -> Result<usize> {
        let v = self.u64()?;
        let v = usize::try_from(v).map_err(|_| self.corrupt("length overflow"))?;
        if v.saturating_mul(item_bytes.max(1)) > self.remaining() {
            return Err(self.truncated());
        }
        Ok(v)
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.corrupt("value overflow"))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    pub fn bools(&mut self) -> Result<Vec<bool>> {
        let n = self.len(1)?;
        (0..n)
            .map(|_| match self.u8()? {
                0 => Ok(false),
                1 => Ok(true),
                b => Err(self.corrupt(format!("invalid flag byte {b}"))),
            })
            .collect()
    }

    pub fn dense(&mut self) -> Result<Dense> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.saturating_mul(8) <= self.remaining())
            .ok_or_else(|| self.truncated())?;
        let data = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Dense::from_vec(rows, cols, data)?)
    }

    pub fn sparse(&mut self) -> Result<SparseMatrix> {
        let n = self.usize()?;
        let offsets = self.usizes()?;
        let cols = self.usizes()?;
        let values = self.f64s()?;
        SparseMatrix::from_csr(n, offsets, cols, values)
            .map_err(|e| self.corrupt(format!("invalid sparse channel: {e}")))
    }

    pub fn tensor(&mut self) -> Result<EdgeTensor> {
        let p = self.len(8)?;
        let chans = (0..p).map(|_| self.sparse()).collect::<Result<Vec<_>>>()?;
        Ok(EdgeTensor::new(chans)?)
    }

    pub fn masks(&mut self) -> Result<Masks> {
        Ok(Masks {
            train: self.bools()?,
            val: self.bools()?,
            test: self.bools()?,
        })
    }
}
