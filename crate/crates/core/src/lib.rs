//! Resolver-side defenses against DNS cache poisoning by off-path spoofers.
//!
//! The crate is organised bottom-up:
//!
//! * [`wire`] encodes and decodes DNS messages while keeping query-name case intact.
//! * [`entropy`] implements the unilateral entropy mechanisms (random transaction ID,
//!   source port, source/destination address, 0x20 case encoding, short-query
//!   extension) and the arithmetic of the resulting entropy budget.
//! * [`sandwich`] detects forgery attempts and re-issues the query between two
//!   guard queries for unpredictable nonexistent names.
//! * [`resolver`] is a sans-IO forwarding resolver that ties the above together
//!   with a TTL cache. Both the simulator and the gateway drive the same state machine.
//! * [`sim`] is a deterministic discrete-event harness with spoofing attackers.
//! * [`gateway`] runs the resolver over real UDP sockets.

pub mod config;
pub mod entropy;
pub mod gateway;
pub mod resolver;
pub mod sandwich;
pub mod sim;
pub mod time;
pub mod wire;

pub use entropy::{EntropyBudget, EntropyConfig, ValidationTuple};
pub use resolver::{Resolver, ResolverConfig};
pub use time::Timestamp;
pub use wire::{DnsMessage, DnsName, RecordType};
