//! Cycle-level simulator of the Azul sparse-solver accelerator.
//!
//! Azul is a grid of small RISC-V tiles with private SRAM, connected by a
//! 2D torus network on chip. Matrix data stays resident in tile memory and
//! every tile computes on the values it owns, exchanging partial results as
//! messages. This crate provides the ISA, the network and tile models, the
//! whole-machine simulator, an assembler, a Matrix Market reader with the
//! partitioners, the SpMV and SpTRSV kernel generators with a host-side PCG
//! driver, and software reference oracles.

pub mod asm;
pub mod cli;
pub mod isa;
pub mod kernels;
pub mod machine;
pub mod noc;
pub mod oracle;
pub mod script;
pub mod sparse;
pub mod tile;
