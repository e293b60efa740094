"""Actor implementations: simulated (oracle / noisy / systematic) and remote."""

from .base import (
    ActorError,
    Candidate,
    FAILURE_MODES,
    NoiseProfile,
    Policy,
    PolicyContext,
    Verification,
    Verifier,
    candidate_from_raw,
    make_candidate,
    parse_verdict,
)
from .remote import (
    EndpointConfig,
    RemoteChatClient,
    RemotePolicy,
    RemoteVerifier,
    encode_body,
    request_body,
)
from .simulated import (
    BernoulliPolicy,
    NoisyPolicy,
    NoisyVerifier,
    OraclePolicy,
    OracleVerifier,
    SystematicErrorPolicy,
    TruthChannel,
    bernoulli_hit,
    precondition_violation_actions,
    wrong_object_actions,
    wrong_receptacle_actions,
)

__all__ = [
    "ActorError",
    "BernoulliPolicy",
    "Candidate",
    "EndpointConfig",
    "FAILURE_MODES",
    "NoiseProfile",
    "NoisyPolicy",
    "NoisyVerifier",
    "OraclePolicy",
    "OracleVerifier",
    "Policy",
    "PolicyContext",
    "RemoteChatClient",
    "RemotePolicy",
    "RemoteVerifier",
    "SystematicErrorPolicy",
    "TruthChannel",
    "Verification",
    "Verifier",
    "bernoulli_hit",
    "candidate_from_raw",
    "encode_body",
    "make_candidate",
    "parse_verdict",
    "precondition_violation_actions",
    "request_body",
    "wrong_object_actions",
    "wrong_receptacle_actions",
]
