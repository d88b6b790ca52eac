"""Exception types shared across the package."""


class FbenvError(Exception):
    """Base class for all errors raised by this package."""


class ProtocolError(FbenvError):
    """The peer sent bytes that violate the wire protocol."""


class UnsupportedEncodingError(ProtocolError):
    """The server used an encoding or message family we do not speak."""


class IncompleteMessageError(FbenvError):
    """The buffer ends mid-message; retry once more bytes have arrived."""


class HandshakeError(FbenvError):
    """Connection setup failed before the session became usable."""


class UnsupportedVersionError(HandshakeError):
    """Server protocol version is below the 3.8 floor."""


class UnsupportedSecurityError(HandshakeError):
    """Server does not offer security type None."""


class HandshakeRefusedError(HandshakeError):
    """Server refused the connection; carries its reason text."""

    def __init__(self, reason: str):
        super().__init__(f"server refused handshake: {reason}")
        self.reason = reason


class ConnectTimeoutError(FbenvError):
    """Connection or handshake did not complete within the deadline."""


class ConnectionLostError(FbenvError):
    """The TCP connection dropped mid-session."""


class InvalidStateError(FbenvError):
    """Operation called on a session or game in the wrong state."""


class UpdateRejectedError(FbenvError):
    """A rectangle update did not fit the framebuffer; buffer untouched."""


class UnsupportedFormatError(FbenvError):
    """Pixel format cannot be used for this operation (e.g. palette mode)."""


class ResetTimeoutError(FbenvError):
    """The terminal screen persisted past the reset deadline."""
