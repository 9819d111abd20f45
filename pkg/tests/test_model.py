"""Core domain types: dates, spells, schemas."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifebook import CivilDate, SpellRecord, compare_dates, validate_spell
from lifebook.errors import (
    InvalidDateError,
    SelfCoMemberError,
    StartAfterEndError,
)
from lifebook.model import DateWindow, days_in_month


dates = st.builds(
    lambda y, m, d: CivilDate(y, m, 1 + d % days_in_month(y, m)),
    st.integers(1900, 2100),
    st.integers(1, 12),
    st.integers(0, 30),
)


class TestCivilDate:
    def test_calendar_order(self):
        assert compare_dates(CivilDate(2019, 6, 12), CivilDate(2019, 6, 13)) == -1

    def test_identity(self):
        assert compare_dates(CivilDate(2000, 1, 1), CivilDate(2000, 1, 1)) == 0

    def test_december_after_june(self):
        assert compare_dates(CivilDate(2019, 12, 2), CivilDate(2019, 6, 13)) == 1

    @pytest.mark.parametrize("y,m,d", [(2019, 13, 1), (2019, 0, 1), (2019, 2, 30), (2019, 6, 0)])
    def test_invalid_dates_rejected(self, y, m, d):
        with pytest.raises(InvalidDateError):
            CivilDate(y, m, d)

    def test_leap_day(self):
        assert CivilDate(2020, 2, 29).day == 29
        with pytest.raises(InvalidDateError):
            CivilDate(2019, 2, 29)

    def test_iso_round_trip(self):
        assert str(CivilDate(2019, 1, 5)) == "2019-01-05"

    def test_next_prev_day(self):
        assert CivilDate(2019, 12, 31).next_day() == CivilDate(2020, 1, 1)
        assert CivilDate(2020, 3, 1).prev_day() == CivilDate(2020, 2, 29)
        assert CivilDate(2020, 1, 1).prev_day() == CivilDate(2019, 12, 31)

    @given(dates, dates)
    def test_total_order_antisymmetric(self, a, b):
        assert compare_dates(a, b) == -compare_dates(b, a)

    @given(dates, dates)
    def test_trichotomy(self, a, b):
        assert compare_dates(a, b) == 0 or (a < b) != (a > b)
        if compare_dates(a, b) == 0:
            assert a == b

    @given(dates, dates, dates)
    def test_transitive(self, a, b, c):
        if a <= b <= c:
            assert a <= c

    @given(dates)
    def test_next_day_strictly_greater(self, a):
        assert a.next_day() > a
        assert a.next_day().prev_day() == a


def _spell(start, end, subject="J01", co=""):
    return SpellRecord.build(
        subject,
        "household",
        start,
        end,
        {"household_type": "3", "person_role": "1", "co_members": co},
    )


class TestValidateSpell:
    def test_closed_spell_valid(self):
        record = _spell(CivilDate(2019, 1, 5), CivilDate(2020, 5, 2))
        assert validate_spell(record) is record

    def test_start_after_end(self):
        record = _spell(CivilDate(2020, 5, 2), CivilDate(2019, 1, 5))
        with pytest.raises(StartAfterEndError):
            validate_spell(record)

    def test_ongoing_spell_valid(self):
        record = _spell(CivilDate(2019, 12, 2), None)
        assert validate_spell(record) is record

    def test_self_co_member(self):
        record = _spell(CivilDate(2019, 1, 5), CivilDate(2020, 5, 2), co="J01;M01")
        with pytest.raises(SelfCoMemberError):
            validate_spell(record, ("co_members",))

    def test_equal_start_end_valid(self):
        record = _spell(CivilDate(2019, 1, 5), CivilDate(2019, 1, 5))
        assert validate_spell(record) is record

    @given(dates, dates)
    def test_accepts_exactly_ordered_intervals(self, a, b):
        record = _spell(a, b)
        if a <= b:
            assert validate_spell(record) is record
        else:
            with pytest.raises(StartAfterEndError):
                validate_spell(record)


class TestDateWindow:
    def test_rejects_inverted(self):
        with pytest.raises(InvalidDateError):
            DateWindow(CivilDate(2020, 1, 1), CivilDate(2019, 1, 1))

    def test_spell_overlap_semantics(self):
        window = DateWindow(CivilDate(2019, 6, 1), CivilDate(2019, 7, 1))
        assert window.overlaps_spell(CivilDate(2019, 6, 13), CivilDate(2019, 12, 1))
        assert window.overlaps_spell(CivilDate(2000, 1, 1), None)
        assert not window.overlaps_spell(CivilDate(2019, 12, 2), None)

    def test_payload_preserves_field_order(self):
        record = _spell(CivilDate(2019, 1, 5), None)
        assert list(record.payload) == ["household_type", "person_role", "co_members"]
