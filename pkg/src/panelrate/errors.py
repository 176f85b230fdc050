"""Exception hierarchy.

Input problems derive from :class:`InputError`, violated statistical
preconditions from :class:`StatisticalError`, and numerical breakdowns from
:class:`NumericalError`; the CLI maps the three families to exit codes.
"""


class PanelRateError(Exception):
    pass


class InputError(PanelRateError, ValueError):
    pass


class StatisticalError(PanelRateError, ValueError):
    pass


class NumericalError(PanelRateError, ArithmeticError):
    pass


class ValidationError(InputError):
    """Raised with every invariant violation found in a dataset."""

    def __init__(self, issues):
        self.issues = list(issues)
        lines = [str(issue) for issue in self.issues]
        super().__init__(f"{len(lines)} validation issue(s):\n  " + "\n  ".join(lines))


class ParseError(InputError):
    pass


class NonPositiveBandwidth(InputError):
    pass


class BoundsOutsideGrid(InputError):
    pass


class EmptyRiskSet(StatisticalError):
    pass


class GridTooCoarse(StatisticalError):
    pass


class InsufficientCauses(StatisticalError):
    pass


class DegenerateResample(StatisticalError):
    pass


class NotSymmetric(NumericalError):
    pass
