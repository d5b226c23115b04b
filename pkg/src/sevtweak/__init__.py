"""Address-tweaked memory encryption: simulator, tweak recovery, and a code-injection attack."""

from .attack import AttackPlan, AttackReport, run_attack
from .gf2 import BitVec128, Gf2System
from .guest import GuestImage, Scenario, VictimState, guest_from_scenario, new_guest
from .memcrypt import EncryptedMemory, EngineConfig, Mode, decrypt_block, encrypt_block
from .recovery import collect_equal_cipher_samples, recover_tweak
from .tweak import TweakTable, random_table, tweak_of

__all__ = [
    "AttackPlan",
    "AttackReport",
    "BitVec128",
    "EncryptedMemory",
    "EngineConfig",
    "Gf2System",
    "GuestImage",
    "Mode",
    "Scenario",
    "TweakTable",
    "VictimState",
    "collect_equal_cipher_samples",
    "decrypt_block",
    "encrypt_block",
    "guest_from_scenario",
    "new_guest",
    "random_table",
    "recover_tweak",
    "run_attack",
    "tweak_of",
]
