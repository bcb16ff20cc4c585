from pydantic import BaseModel, ConfigDict


class BaseSchema(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


class StrictSchema(BaseSchema):
    """Configuration documents: unknown keys are rejected."""

    model_config = ConfigDict(
        arbitrary_types_allowed=True, extra="forbid", validate_assignment=True
    )


class DiagnosticsSchema(BaseSchema):
    """Counters attached to a stage result and copied into the run manifest."""

    def merge(self, other):
        data = self.model_dump()
        for key, value in other.model_dump().items():
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                data[key] = data.get(key, 0) + value
        return self.__class__(**data)
