from affordmap.symbolic.focal import focal_expression, make_focal_gradient, make_focal_loss

__all__ = ["focal_expression", "make_focal_gradient", "make_focal_loss"]
