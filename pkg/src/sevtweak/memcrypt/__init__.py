from .engine import (
    EngineConfig,
    Mode,
    decrypt_block,
    decrypt_blocks,
    encrypt_block,
    encrypt_blocks,
)
from .memory import PAGE_SIZE, EncryptedMemory, hexdump

__all__ = [
    "EngineConfig",
    "EncryptedMemory",
    "Mode",
    "PAGE_SIZE",
    "decrypt_block",
    "decrypt_blocks",
    "encrypt_block",
    "encrypt_blocks",
    "hexdump",
]
