# scene: living_room.json
object = list(filter(object_set=scene(), category="desk"))[0]
lwh = query_attribute(object=object, attribute_type="lwh")
print(lwh)
distance = query_attribute(object=object, attribute_type="distance")
print(distance)
# Determine whether the color of the object is brown, black or red
color = query_attribute(object=object, attribute_type="color", candidate_attribute_values=["brown", "black", "red"])
print(color)
# Determine whether the shape of the object is round, square or rectangular
shape = query_attribute(object=object, attribute_type="shape", candidate_attribute_values=["round", "square", "rectangular"])
print(shape)
# Determine whether the material of the object is wood or metal
material = query_attribute(object=object, attribute_type="material", candidate_attribute_values=["wood", "metal"])
print(material)
state = query_state(object=object, candidate_states=["neat", "messy"])
print(state)
