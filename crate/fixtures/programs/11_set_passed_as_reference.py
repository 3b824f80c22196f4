# scene: study_room.json
object_set = scene()
tables = filter(object_set=object_set, category="table")
on_table = relate(object_set=object_set, reference_object=tables, relation="on")
print(on_table)
