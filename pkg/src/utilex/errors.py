"""Exception hierarchy shared by every layer of the trading stack."""


class UtilexError(Exception):
    """Base class for all domain errors."""


# -- ledger / currency -------------------------------------------------------

class LedgerError(UtilexError):
    """A transaction or block could not be applied."""


class WrongAuthority(LedgerError):
    pass


class BadSignature(LedgerError):
    pass


class ReplayedSequence(LedgerError):
    pass


class BadTransaction(LedgerError):
    """Malformed payload, unknown kind, or a kind that only the ledger may emit."""


class InsufficientCredits(LedgerError):
    pass


class NonPositiveAmount(LedgerError):
    pass


class NotMintAuthority(LedgerError):
    pass


class InvalidQuantity(LedgerError):
    pass


class DeadlineInPast(LedgerError):
    pass


class UnknownContract(LedgerError):
    pass


class ContractNotActive(LedgerError):
    pass


class DeadlinePassed(ContractNotActive):
    pass


class IllegalTransition(LedgerError):
    pass


class NotAParty(LedgerError):
    pass


class BadProof(LedgerError):
    pass


class DuplicateRating(LedgerError):
    pass


class NotBuyer(LedgerError):
    pass


class ContractNotTerminal(LedgerError):
    pass


class InvalidRating(LedgerError):
    pass


class MeterAlreadyRegistered(LedgerError):
    pass


# -- metering ----------------------------------------------------------------

class MeteringError(UtilexError):
    pass


class UnregisteredMeter(MeteringError):
    pass


class UtilityMismatch(MeteringError):
    pass


class OwnerMismatch(MeteringError):
    pass


class InvalidReading(MeteringError):
    pass


class Disputed(MeteringError):
    """Supplier and consumer readings differ by more than the tolerance.

    The disputed proof is attached so the caller can escalate to a
    revocation with partial settlement.
    """

    def __init__(self, message, proof=None):
        super().__init__(message)
        self.proof = proof


# -- market ------------------------------------------------------------------

class MarketError(UtilexError):
    pass


class OfferRejected(MarketError):
    pass


class BadOfferSignature(OfferRejected):
    pass


class AlreadyExpired(OfferRejected):
    pass


class NonPositiveQuantity(OfferRejected):
    pass


class OfferGone(MarketError):
    pass


# -- pricing -----------------------------------------------------------------

class PricingError(UtilexError):
    pass


class NonPositivePrice(PricingError):
    pass


class ZeroTargetStock(PricingError):
    pass


class UnknownPolicy(PricingError):
    pass


# -- node / simnet -----------------------------------------------------------

class BadReading(UtilexError):
    pass


class ScenarioInvalid(UtilexError):
    def __init__(self, message, location=""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class NoSuchTarget(UtilexError):
    pass
