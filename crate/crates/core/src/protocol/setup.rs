//! Key setup — once per run, identical for every split index.
//!
//! The user generates the gateway key pair and rotation keys and sends the
//! public halves to A. In the three-server modes, A forwards the gateway
//! public key to B and C (unconditionally, so the setup transcript does
//! not depend on the split), B and C contribute shares of the joint
//! public key, and A aggregates and broadcasts it. The joint secret key
//! `s_B + s_C` never exists in one place; A holds no share of it at all —
//! decryptions A needs are granted by B and C per ciphertext.

use rand_chacha::ChaCha20Rng;

use crate::bfv::serial::Wire;
use crate::bfv::{keygen_public, keygen_secret, BfvCtx, GaloisKeys, PublicKey, SecretKey};
use crate::error::{Error, Result};
use crate::mphe::{aggregate_public_key, common_reference_poly, partial_public_key, Partial};
use crate::protocol::messages::{JOINT_PK, JOINT_PK_SHARE, PK_FORWARD, USER_GALOIS, USER_PK};
use crate::protocol::rng::{reference_seed, stream, Purpose};
use crate::protocol::{Mode, RunConfig};
use crate::ring::RnsPoly;
use crate::transport::{Endpoint, PartyId, Phase, LAYER_NONE};

/// The user's key material after setup.
pub(crate) struct UserKeys {
    pub sk: SecretKey,
    pub pk: PublicKey,
    pub joint_pk: Option<PublicKey>,
}

/// Server A's key material after setup. Setup routes the user's public
/// key to B and C and broadcasts the aggregated joint key, but A retains
/// neither: A never encrypts, it only rotates under the user's keys.
pub(crate) struct GatewayKeys {
    pub user_galois: GaloisKeys,
}

/// A remote server's key material after setup (absent in the two-party
/// mode, where B and C stay silent).
pub(crate) struct HolderKeys {
    pub share: SecretKey,
    pub user_pk: PublicKey,
    pub joint_pk: PublicKey,
}

fn key_rng(cfg: &RunConfig, party: PartyId) -> ChaCha20Rng {
    stream(cfg.seed, party, Purpose::KeyGen, 0, 0)
}

pub(crate) fn user_setup(ctx: &BfvCtx, cfg: &RunConfig, ep: &mut Endpoint) -> Result<UserKeys> {
    ep.set_phase(Phase::Setup);
    let mut rng = key_rng(cfg, PartyId::User);
    let sk = keygen_secret(ctx, &mut rng);
    let pk = keygen_public(ctx, &sk, &mut rng);
    let galois = GaloisKeys::generate(ctx, &sk, &mut rng);
    ep.send(PartyId::ServerA, Phase::Setup, LAYER_NONE, USER_PK, pk.to_bytes())?;
    ep.send(
        PartyId::ServerA,
        Phase::Setup,
        LAYER_NONE,
        USER_GALOIS,
        galois.to_bytes(),
    )?;
    let joint_pk = if cfg.mode == Mode::Delphi2 {
        None
    } else {
        let frame = ep.expect(PartyId::ServerA, Phase::Setup, JOINT_PK)?;
        Some(PublicKey::from_bytes(&frame.payload)?)
    };
    Ok(UserKeys { sk, pk, joint_pk })
}

pub(crate) fn gateway_setup(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    ep: &mut Endpoint,
) -> Result<GatewayKeys> {
    ep.set_phase(Phase::Setup);
    let user_pk_bytes = ep.expect(PartyId::User, Phase::Setup, USER_PK)?.payload;
    let user_galois =
        GaloisKeys::from_bytes(&ep.expect(PartyId::User, Phase::Setup, USER_GALOIS)?.payload)?;
    if cfg.mode != Mode::Delphi2 {
        for server in [PartyId::ServerB, PartyId::ServerC] {
            ep.send(
                server,
                Phase::Setup,
                LAYER_NONE,
                PK_FORWARD,
                user_pk_bytes.clone(),
            )?;
        }
        let mut partials = Vec::new();
        for server in [PartyId::ServerB, PartyId::ServerC] {
            let frame = ep.expect(server, Phase::Setup, JOINT_PK_SHARE)?;
            partials.push(Partial {
                holder: server.idx() as u8,
                value: RnsPoly::from_bytes(&frame.payload)?,
            });
        }
        let p1 = common_reference_poly(ctx, reference_seed(cfg.seed));
        let joint = aggregate_public_key(ctx, &p1, &partials)?;
        for peer in [PartyId::User, PartyId::ServerB, PartyId::ServerC] {
            ep.send(peer, Phase::Setup, LAYER_NONE, JOINT_PK, joint.to_bytes())?;
        }
    }
    Ok(GatewayKeys { user_galois })
}

pub(crate) fn holder_setup(
    ctx: &BfvCtx,
    cfg: &RunConfig,
    ep: &mut Endpoint,
) -> Result<Option<HolderKeys>> {
    ep.set_phase(Phase::Setup);
    if cfg.mode == Mode::Delphi2 {
        return Ok(None);
    }
    let party = ep.party();
    if party != PartyId::ServerB && party != PartyId::ServerC {
        return Err(Error::InvalidArgument(format!(
            "holder setup ran on {party}, expected a remote server"
        )));
    }
    let mut rng = key_rng(cfg, party);
    let share = keygen_secret(ctx, &mut rng);
    let user_pk =
        PublicKey::from_bytes(&ep.expect(PartyId::ServerA, Phase::Setup, PK_FORWARD)?.payload)?;
    let p1 = common_reference_poly(ctx, reference_seed(cfg.seed));
    let partial = partial_public_key(ctx, &share, &p1, &mut rng);
    ep.send(
        PartyId::ServerA,
        Phase::Setup,
        LAYER_NONE,
        JOINT_PK_SHARE,
        partial.to_bytes(),
    )?;
    let joint_pk =
        PublicKey::from_bytes(&ep.expect(PartyId::ServerA, Phase::Setup, JOINT_PK)?.payload)?;
    Ok(Some(HolderKeys {
        share,
        user_pk,
        joint_pk,
    }))
}
